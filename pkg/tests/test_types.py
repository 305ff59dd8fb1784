import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import KIND_ENV, any_kind_types, star_types
from typedis import types as T
from typedis.surface import parse_type

TREE = "mu a. (int + (a * a) @ {d}) @ {d}"


def ty(text):
    return parse_type(text)


def same(a, b):
    """Alpha-equivalence without normalising either side first."""
    return T._aeq(a, b, {}, {}, {}, {}, [0])


# ---------------------------------------------------------------------------
# A one-step contractor, iterated to a fixpoint, as an oracle for beta_normalize
# ---------------------------------------------------------------------------

def contract_once(t):
    """Contract the leftmost-outermost timestamp redex; None if ``t`` is normal."""
    if isinstance(t, T.TApp) and isinstance(t.fn, T.TLam):
        return T.tsubst(t.fn.body, {t.fn.ts: t.arg})
    fields = {
        T.TLam: ("body",), T.TApp: ("fn",), T.Forall: ("body",), T.Rec: ("body",),
        T.At: ("body",), T.Array: ("elem",), T.Prod: ("left", "right"),
        T.Sum: ("left", "right"),
    }
    if isinstance(t, T.Arrow):
        parts = list(t.args) + [t.ret]
        for i, p in enumerate(parts):
            c = contract_once(p)
            if c is not None:
                parts[i] = c
                return T.Arrow(t.tsparams, t.constraints, tuple(parts[:-1]), t.run, parts[-1])
        return None
    for name in fields.get(type(t), ()):
        c = contract_once(getattr(t, name))
        if c is not None:
            kw = {f: getattr(t, f) for f in t.__dataclass_fields__}
            kw[name] = c
            return type(t)(**kw)
    return None


def normalize_by_steps(t):
    for _ in range(10_000):
        nxt = contract_once(t)
        if nxt is None:
            return t
        t = nxt
    raise AssertionError("no normal form")


@settings(max_examples=400)
@given(any_kind_types)
def test_beta_normalize_matches_stepwise_contraction(t):
    assert same(T.beta_normalize(t), normalize_by_steps(t))


@settings(max_examples=400)
@given(star_types, st.sampled_from(["d0", "d1", "x"]), st.sampled_from(["d1", "d2", "y"]))
def test_tsubst_commutes_with_normalisation(t, a, b):
    m = {a: b}
    assert T.alpha_eq(T.tsubst(T.beta_normalize(t), m), T.beta_normalize(T.tsubst(t, m)))


def test_beta_examples():
    red = T.TApp(T.TLam("d", ty(TREE.format(d="d"))), "d0")
    assert T.beta_normalize(red) == ty(TREE.format(d="d0"))
    normal = ty("array int @ d")
    assert T.beta_normalize(normal) == normal


# ---------------------------------------------------------------------------

def test_kinds():
    assert T.kind_of({}, T.INT) == T.STAR
    assert T.kind_of({}, ty("\\d. (int * int) @ d")) == T.Kind(1)
    with pytest.raises(T.KindingError) as err:
        T.kind_of({"a": T.STAR}, T.TApp(T.TVar("a"), "d"))
    assert err.value.rule == "K-App"


@settings(max_examples=200)
@given(star_types)
def test_generated_types_are_well_kinded(t):
    assert T.kind_of(KIND_ENV, t) == T.STAR


def test_reachable():
    assert T.reachable(frozenset(), "d", "d")
    g = {("d1", "d2"), ("d2", "d3")}
    assert T.reachable(g, "d1", "d3")
    assert not T.reachable({("d1", "d2")}, "d2", "d1")


def test_graph_subsumes():
    assert T.graph_subsumes({("a", "b")}, frozenset())
    assert T.graph_subsumes({("a", "b"), ("b", "c")}, {("a", "c")})
    assert not T.graph_subsumes({("a", "b")}, {("b", "a")})


def test_valid_variable():
    a = T.TVar("a")
    assert T.valid_variable(frozenset(), "a", "d", "d", T.Prod(T.INT, a))
    assert not T.valid_variable({("d", "d2")}, "a", "d", "d", T.Array(a))
    assert T.valid_variable({("d2", "d3")}, "a", "d2", "d2", T.At(T.Sum(T.INT, a), "d3"))
    assert not T.valid_variable(frozenset(), "a", "d2", "d2", T.At(T.Sum(T.INT, a), "d3"))


def test_tsubst():
    assert T.tsubst(ty(TREE.format(d="dp")), {"dp": "d"}) == ty(TREE.format(d="d"))
    t = ty("[e | d < e](int) -> e int @ d")
    assert T.tsubst(t, {}) is t
    # bound timestamps are not substituted, and binders are renamed to avoid capture
    assert T.tsubst(t, {"e": "d9"}) == t
    moved = T.tsubst(t, {"d": "e"})
    assert T.alpha_eq(moved, ty("[x | e < x](int) -> x int @ e"))


def test_alpha_eq():
    assert T.alpha_eq(ty("forall a :: * . a"), ty("forall b :: * . b"))
    assert not T.alpha_eq(ty(TREE.format(d="d1")), ty(TREE.format(d="d2")))
    red = T.TApp(T.TLam("d", ty(TREE.format(d="d"))), "d0")
    assert T.alpha_eq(red, ty(TREE.format(d="d0")))
    assert T.alpha_eq(ty("[d](int) -> d int @ d0"), ty("[q](int) -> q int @ d0"))
    assert not T.alpha_eq(ty("[d e | d < e](int) -> e int @ d0"),
                          ty("[d e | e < d](int) -> e int @ d0"))
