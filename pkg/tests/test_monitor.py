import pytest

from typedis import ast as A
from typedis import monitor as M
from typedis import runtime as R
from typedis.ast import ArrayBlock, Loc
from typedis.surface import parse_expr

FORKED = {(0, 0), (0, 1), (0, 2)}


def forked(expr_text, owner):
    """Two sibling tasks 1 and 2 under root 0, with one cell ``#0`` allocated by ``owner``."""
    return R.Configuration.from_parts(
        {Loc(0): ArrayBlock((A.Int(1),))}, {Loc(0): owner},
        R.CompGraph(R.CYCLIC, set(FORKED)), R.Node(0, R.Leaf(1), R.Leaf(2)),
        parse_expr(expr_text, runtime=True))


def start(text):
    return R.initial(parse_expr(text, runtime=True))


def finish(cfg):
    while en := R.enabled(cfg):
        R.apply(cfg, en[0])
    return cfg


@pytest.mark.parametrize("owner", [0, 1])
def test_own_and_ancestor_locations_are_fine(owner):
    ok, wit = M.disentangled(forked("⟨let y = #0 in y ∥ 2 + 2⟩", owner))
    assert ok and wit == ()


def test_sibling_location_is_a_violation():
    ok, wit = M.disentangled(forked("⟨1 + 1 ∥ let y = #0 in y⟩", 1))
    assert not ok
    (w,) = wit
    assert (w.path, w.loc, w.alloc_ts, w.ts) == ((1,), 0, 1, 2)
    assert "held at task 2" in str(w)


def test_suspended_context_roots_are_checked_against_every_leaf():
    ok, wit = M.disentangled(forked("(#0, ⟨1 + 1 ∥ 2 + 2⟩)", 1))
    assert not ok
    assert {w.ts for w in wit} == {2}


def test_dangling_location_is_a_violation():
    cfg = forked("⟨#5 ∥ 2 + 2⟩", 0)
    ok, wit = M.disentangled(cfg)
    assert not ok and wit[0].alloc_ts is None


def test_oob():
    store = {Loc(0): ArrayBlock((A.Int(1),))}
    assert M.oob(store, parse_expr("#0.[1]", runtime=True))
    assert M.oob(store, parse_expr("#0.[-1] <- 3", runtime=True))
    assert M.oob(store, parse_expr("alloc(0, 1)", runtime=True))
    assert not M.oob(store, parse_expr("#0.[0]", runtime=True))
    assert not M.oob(store, parse_expr("fst 1", runtime=True))


@pytest.mark.parametrize("text,cls,is_safe", [
    ("5", M.FINAL, True),
    ("1 + 2", M.REDUCIBLE, True),
    ("fst 1", M.HARD_STUCK, False),
    ("let a = alloc(1, 0) in a.[3]", M.OOB_STUCK, True),
])
def test_classification(text, cls, is_safe):
    v = M.safe(finish(start(text)) if cls != M.REDUCIBLE else start(text))
    assert v.classification == cls
    assert v.safe is is_safe
    assert v.disentangled


def test_a_stuck_task_makes_the_whole_configuration_unsafe():
    cfg = forked("⟨#0.[7] ∥ fst 2⟩", 0)
    assert M.classify(cfg) == M.HARD_STUCK
    cfg = forked("⟨#0.[7] ∥ 2 + 2⟩", 0)
    assert M.classify(cfg) == M.REDUCIBLE
    cfg = forked("⟨#0.[7] ∥ #0.[9]⟩", 0)
    assert M.classify(cfg) == M.OOB_STUCK


def test_detect_acquisition():
    cfg = forked("⟨1 + 1 ∥ 2 + 2⟩", 1)
    left, right = R.enabled(cfg)
    assert M.detect_acquisition(cfg, left, Loc(0))
    assert not M.detect_acquisition(cfg, right, Loc(0))
    assert M.detect_acquisition(cfg, right, A.Int(3))


def test_acquisitions_ok_flags_a_load_of_a_sibling_pointer():
    cfg = R.Configuration.from_parts(
        {Loc(0): ArrayBlock((Loc(1),)), Loc(1): ArrayBlock((A.Int(4),))},
        {Loc(0): 0, Loc(1): 1},
        R.CompGraph(R.CYCLIC, set(FORKED)), R.Node(0, R.Leaf(1), R.Leaf(2)),
        parse_expr("⟨1 + 1 ∥ #0.[0]⟩", runtime=True))
    left, right = R.enabled(cfg)
    assert M.acquisitions_ok(cfg, left) == (True, ())
    ok, wit = M.acquisitions_ok(cfg, right)
    assert not ok and wit[0].loc == 1 and wit[0].ts == 2
