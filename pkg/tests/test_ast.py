from typedis import ast as A
from typedis import corpus as C
from typedis.surface import parse_expr


def rt(text):
    return parse_expr(text, runtime=True)


def test_locs():
    assert A.locs(rt("let x = (#1, #2) in fst x")) == {A.Loc(1), A.Loc(2)}
    assert A.locs(rt("5")) == frozenset()
    assert A.locs(rt("fun f (x: int) @d0 : int -> #3")) == {A.Loc(3)}


def test_source_programs_have_no_locations():
    for e in C.entries():
        assert A.locs(e.expr()) == frozenset()


def test_subst():
    assert A.subst(rt("x + x"), {"x": A.Int(3)}) == rt("3 + 3")
    assert A.subst(rt("let x = 1 in y"), {"y": A.Int(2), "x": A.Int(9)}) == rt("let x = 1 in 2")
    e = rt("let y = x in x")
    assert A.subst(e, {}) is e


def test_subst_respects_binders():
    lam = rt("fun f (x: int) @d0 : int -> x + y")
    got = A.subst(lam, {"x": A.Int(1), "y": A.Int(2), "f": A.Int(3)})
    assert got == rt("fun f (x: int) @d0 : int -> x + 2")
    case = rt("case z of inj1 a -> a | inj2 b -> z")
    assert A.subst(case, {"a": A.Int(0), "z": A.Loc(4)}) == rt("case #4 of inj1 a -> a | inj2 b -> #4")


def test_is_value():
    assert A.is_value(rt("()"))
    assert A.is_value(rt("#7"))
    assert not A.is_value(rt("fold[mu a. (int + int) @ d0] 2"))
    assert A.is_value(rt("⟨fold 2⟩"))


def test_decompose_redex():
    e = rt("let x = (1 + 2) in x")
    d = A.decompose(e)
    assert isinstance(d, A.AtRedex)
    assert d.redex == rt("1 + 2")
    assert [f.kind for f in d.context] == ["let-hole0"]
    assert A.plug(d.context, d.redex) == e


def test_decompose_value_and_pair():
    assert isinstance(A.decompose(A.Int(1)), A.AtValue)
    e = rt("let y = ⟨1 + 1 ∥ 2⟩ in y")
    d = A.decompose(e)
    assert isinstance(d, A.AtParPair)
    assert d.pair == rt("⟨1 + 1 ∥ 2⟩")
    assert A.plug(d.context, d.pair) == e


def test_decompose_left_to_right():
    d = A.decompose(rt("(1 + 2, 3 + 4)"))
    assert d.redex == rt("1 + 2")
    d = A.decompose(rt("(5, 3 + 4)"))
    assert d.redex == rt("3 + 4")


def test_erase_drops_annotations():
    e = rt("sub[int] (tfun a :: * -> 1)")
    assert A.erase(e) == A.Int(1)
    assert e.erased == A.Int(1)
