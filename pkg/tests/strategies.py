"""Hypothesis strategies shared by the property suites."""

from __future__ import annotations

from hypothesis import strategies as st

from typedis import types as T

NAMES = "abcdefg"
STAMPS = ("d0", "d1", "d2", "x", "y")
KIND_ENV = {"a": T.STAR, "b": T.STAR, "h": T.Kind(1)}


@st.composite
def graphs(draw, names=NAMES, max_edges=12):
    pairs = st.tuples(st.sampled_from(names), st.sampled_from(names))
    return frozenset(draw(st.lists(pairs, max_size=max_edges)))


@st.composite
def closure_subgraph(draw, g, names=NAMES):
    """A random set of edges each of which ``g`` already implies."""
    implied = sorted((x, y) for x in names for y in names if T.reachable(g, x, y))
    return frozenset(draw(st.lists(st.sampled_from(implied), max_size=8)))


stamps = st.sampled_from(STAMPS)

_base = st.one_of(
    st.sampled_from([T.INT, T.BOOL, T.UNIT, T.TVar("a"), T.TVar("b")]),
    st.builds(lambda d: T.TApp(T.TVar("h"), d), stamps),
)


def _extend(s):
    binder = st.sampled_from(("x", "y"))
    return st.one_of(
        st.builds(lambda t, d: T.At(T.Array(t), d), s, stamps),
        st.builds(lambda l, r, d: T.At(T.Prod(l, r), d), s, s, stamps),
        st.builds(lambda l, r, d: T.At(T.Sum(l, r), d), s, s, stamps),
        st.builds(lambda x, t, d: T.TApp(T.TLam(x, t), d), binder, s, stamps),
        st.builds(lambda t: T.Forall("b", T.STAR, t), s),
        st.builds(lambda t, d: T.Rec("a", T.Prod(t, T.TVar("a")), d), s, stamps),
        st.builds(lambda x, a, r, d: T.At(T.Arrow((x,), frozenset({(d, x)}), (a,), x, r), d),
                  binder, s, s, stamps),
    )


star_types = st.recursive(_base, _extend, max_leaves=12)
"""Types of kind ``*`` under ``KIND_ENV`` (with beta-redexes over timestamps)."""

any_kind_types = st.one_of(
    star_types,
    st.builds(T.TLam, st.sampled_from(("x", "y")), star_types),
    st.builds(lambda t: T.TLam("x", T.TLam("y", t)), star_types),
)


# ---------------------------------------------------------------------------
# Small racy programs: two (optionally nested) tasks sharing a reference cell
# ---------------------------------------------------------------------------

_OPS = {
    "publish": "r.[0] <- alloc(1, {k})",
    "peek": "(let v = r.[0] in v.[0])",
    "swap": "cas(r, 0, r.[0], alloc(1, {k}))",
    "copy": "w.[0] <- r.[0]",
    "local": "(let q = alloc(1, {k}) in q.[0])",
    "old": "r.[0] <- w.[0]",
}


def _task(name: str, body: str) -> str:
    return f"fun {name} [e | d0 < e] (u: unit) @e : unit -> {body}"


def _par(left: str, right: str) -> str:
    return f"par[\\e. unit, \\e. unit]({_task('left', left)}, {_task('right', right)})"


@st.composite
def _body(draw, depth):
    ops = draw(st.lists(st.sampled_from(sorted(_OPS)), max_size=3))
    parts = [_OPS[o].format(k=draw(st.integers(0, 9))) for o in ops]
    if depth > 0 and draw(st.booleans()):
        parts.insert(draw(st.integers(0, len(parts))),
                     _par(draw(_body(depth - 1)), draw(_body(depth - 1))))
    out = "()"
    for p in reversed(parts):
        out = f"let _ = {p} in {out}"
    return out


@st.composite
def racy_programs(draw):
    left, right = draw(_body(1)), draw(_body(1))
    tail = draw(st.sampled_from(["()", "(let v = r.[0] in v.[0])"]))
    return (
        "def r = alloc(1, alloc(1, 0))\n"
        "def w = alloc(1, alloc(1, 1))\n"
        f"main\n  let _ = {_par(left, right)} in {tail}\n"
    )
