import pytest

from typedis import ast as A
from typedis import corpus as C
from typedis import types as T
from typedis.surface import (ParseError, parse_expr, parse_program, parse_type, print_expr,
                             print_program, print_type)


def test_parse_let():
    prog = parse_program("main let x = 1 in x")
    assert not prog.decls
    assert isinstance(prog.main, A.Let)


def test_runtime_constructs_rejected_in_source():
    with pytest.raises(ParseError) as err:
        parse_expr("⟨1 ∥ 2⟩")
    assert err.value.diagnostic.rule == "runtime-only"
    with pytest.raises(ParseError):
        parse_expr("#3")


def test_build_call_sites_carry_timestamps():
    prog = C.entry("build").program()
    main = prog.main
    assert isinstance(main, A.Call) and main.tsargs == ("d0",)


def test_parse_types():
    assert parse_type("array int @ d") == T.At(T.Array(T.INT), "d")
    lst = parse_type("mu a. (unit + (int * a @ d)) @ d")
    assert lst == T.Rec("a", T.Sum(T.UNIT, T.At(T.Prod(T.INT, T.TVar("a")), "d")), "d")
    assert parse_type("forall a :: * . a") == T.Forall("a", T.STAR, T.TVar("a"))


def test_kinds_print():
    assert [str(T.Kind(n)) for n in range(3)] == ["*", "*+", "*++"]
    assert print_type(T.Forall("a", T.Kind(2), T.TVar("a"))) == "forall a :: *++ . a"


def test_boxed_type_needs_stamp():
    with pytest.raises(ParseError):
        parse_type("array int")


def test_spans_are_monotone():
    text = C.entry("dedup").text
    spans = []

    def walk(e):
        if e.span is not None:
            spans.append((e.span.line, e.span.col))
        for k in e.children():
            walk(k)

    for d in parse_program(text).decls:
        before = len(spans)
        walk(d.expr)
        assert spans[before] == min(spans[before:])


@pytest.mark.parametrize("name", [e.name for e in C.entries()])
def test_round_trip_corpus(name):
    prog = C.entry(name).program()
    again = parse_program(print_program(prog))
    assert [d.name for d in again.decls] == [d.name for d in prog.decls]
    for a, b in zip(again.decls, prog.decls):
        assert a.expr == b.expr
    assert again.main == prog.main


@pytest.mark.parametrize("text", [
    "let x = 1 + 2 * 3 in x - 1 - 1",
    "if true || false && true then (1, 2) else (3, 4)",
    "fst (snd ((1, (2, 3))))",
    "alloc(3, 0).[1] <- 4",
    "case inj1[(int + bool) @ d0] 5 of inj1 x -> x | inj2 y -> 0",
    "cas(a, 0, 1, 2)",
    "f [d0 d1] (1, g(2))",
    "length a mod 3",
    "1 - (2 - 3)",
])
def test_round_trip_expressions(text):
    e = parse_expr(text)
    assert parse_expr(print_expr(e)) == e
