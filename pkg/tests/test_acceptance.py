"""Acceptance suite: one pass/fail line per criterion, each with a pinned time budget.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the summary) or
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import time

import pytest

import properties as P
from typedis import checker as K
from typedis import corpus as C
from typedis import explorer as X
from typedis import monitor as M
from typedis import runtime as R
from typedis import surface as S
from typedis import types as T

LIMITS = {1: 5.0, 2: 1.0, 3: 60.0, 4: 120.0, 5: 120.0, 6: 5.0, 7: 30.0, 8: 120.0}
SEEDS = 1000
FUEL = 100_000
STATE_CAP = 100_000
STEP_BOUND = 200

_results: dict[int, str] = {}


def _record(n: int, title: str, ok: bool, elapsed: float, detail: str) -> bool:
    ok = ok and elapsed < LIMITS[n]
    _results[n] = (f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title} - {detail}"
                   f" [{elapsed:.2f}s / {LIMITS[n]:.0f}s]")
    print(_results[n])
    return ok


def report_lines() -> list[str]:
    return [_results[k] for k in sorted(_results)]


# ---------------------------------------------------------------------------
# 1-2: typing
# ---------------------------------------------------------------------------

# (corpus file, definition, type it must check at)
STATED_TYPES = [
    ("build", "build", "[d](int, int) -> d tree d @ d0"),
    ("selectmap", "selectmap",
     "[d dp df dt]([e](int) -> e bool @ dp, [e](int) -> e int @ df, tree dt) -> d tree d @ d0"),
    ("parfor", "parfor", "[d dk](int, int, [e | d < e](int) -> e unit @ dk) -> d unit @ d0"),
    ("dedup", "add",
     "forall a :: * . [d d1 d2]([](a) -> d int @ d1, array a @ d2, a, a) -> d unit @ d0"),
    ("dedup", "dedup", "forall a :: * . [d d1 d2]([e | d < e](a) -> e int @ d1, a, array a @ d2)"
     " -> d (array a @ d) @ d0"),
    ("par2", "par2", "[d d1 d2]([e | d < e](unit) -> e unit @ d1,"
     " [e | d < e](unit) -> e unit @ d2) -> d unit @ d0"),
    ("closures", "f", "[d](unit) -> d unit @ d0"),
    ("closures", "g", "[](int) -> d0 unit @ d0"),
]

NEGATIVE_RULES = {
    "entangled": "T-CAS",
    "neg_child_store": "T-Store",
    "neg_deep_array": "T-Subtiming",
    "neg_tabs": "T-TAbs",
}


def test_criterion_1_corpus_typability():
    t0 = time.perf_counter()
    bad = []
    cache: dict = {}
    for file, name, stated in STATED_TYPES:
        if file not in cache:
            prog = C.entry(file).program()
            cache[file] = (prog, K.decl_types(prog))
        prog, got = cache[file]
        want = S.parse_type(stated, "<stated>", prog.aliases)
        if name not in got or not T.alpha_eq(got[name], want):
            bad.append(f"{file}.{name}: {got.get(name)}")
    elapsed = time.perf_counter() - t0
    detail = f"{len(STATED_TYPES) - len(bad)}/{len(STATED_TYPES)} definitions at their stated types"
    assert _record(1, "corpus typability", not bad, elapsed, detail), bad


def test_criterion_2_negative_typing():
    t0 = time.perf_counter()
    got = {}
    for name in NEGATIVE_RULES:
        try:
            K.decl_types(C.entry(name).program())
            got[name] = None
        except K.TypeCheckError as err:
            got[name] = err.rule
    elapsed = time.perf_counter() - t0
    ok = got == NEGATIVE_RULES
    detail = ", ".join(f"{k}->{v}" for k, v in got.items())
    assert _record(2, "negative typing", ok, elapsed, detail), got


# ---------------------------------------------------------------------------
# 3: seeded runs of every typed program
# ---------------------------------------------------------------------------

def desk_programs() -> dict[str, str]:
    """Every typed corpus program at the sizes used for the seeded runs."""
    fixed = {n: C.entry(n).text for n in ("closures", "par2", "disentangled", "oob")}
    return {
        **fixed,
        "build": C.build_source(2),
        "selectmap": C.selectmap_source(1),
        "parfor": C.parfor_source(4),
        "dedup": C.dedup_source([3, 1, 3, 2]),
    }


def test_criterion_3_seeded_runs_safe_and_disentangled():
    progs = desk_programs()
    assert set(progs) == set(C.POSITIVE)
    for src in progs.values():
        K.check_expr(C.program(src))
    compiled = {n: C.program(src) for n, src in progs.items()}
    t0 = time.perf_counter()
    failures = []
    runs = 0
    for name, prog in compiled.items():
        expected = X.OOB_STUCK if name == "oob" else X.FINAL_VALUE
        for mode in R.MODES:
            for seed in range(SEEDS):
                rep = X.run(prog, X.Seeded(seed), FUEL, mode)
                runs += 1
                if not rep.clean or rep.outcome != expected:
                    failures.append((name, mode, seed, rep.outcome))
    elapsed = time.perf_counter() - t0
    detail = f"{runs} runs over {len(compiled)} programs x {len(R.MODES)} modes, {len(failures)} failing"
    assert _record(3, "seeded runs safe and disentangled", not failures, elapsed, detail), failures[:5]


# ---------------------------------------------------------------------------
# 4-5: exhaustive exploration with the standard-mode twin
# ---------------------------------------------------------------------------

def explore_programs() -> dict[str, str]:
    """Typed programs with at most two nested pars, plus the entangled one."""
    fixed = {n: C.entry(n).text for n in ("closures", "par2", "disentangled", "oob", "entangled")}
    return {
        **fixed,
        "build": C.build_source(2),
        "selectmap": C.selectmap_source(1),
        "parfor": C.parfor_source(3),
        "dedup": C.dedup_source([3, 1, 3]),
    }


@pytest.fixture(scope="module")
def explored():
    t0 = time.perf_counter()
    out = {}
    for name, src in explore_programs().items():
        out[name] = (C.program(src), X.explore(C.program(src), STEP_BOUND, R.CYCLIC,
                                               state_cap=STATE_CAP, compare_modes=True))
    return out, time.perf_counter() - t0


def test_criterion_4_exhaustive_exploration(explored):
    results, elapsed = explored
    problems = []
    for name, (prog, e) in results.items():
        if e.truncated:
            problems.append(f"{name} truncated")
        if name == "entangled":
            if not e.violations:
                problems.append("entangled: no violation found")
                continue
            replay = X.run(prog, X.Replay(e.violations[0].schedule), FUEL)
            if replay.first_violation is None:
                problems.append("entangled: violation schedule does not replay")
        elif e.violations:
            problems.append(f"{name}: {len(e.violations)} violations")
    states = sum(e.states for _, e in results.values())
    ent = len(results["entangled"][1].violations)
    detail = (f"{len(results)} programs, {states} canonical states, entangled violations={ent},"
              f" typed violations={sum(len(e.violations) for n, (_, e) in results.items() if n != 'entangled')}")
    assert _record(4, "exhaustive exploration", not problems, elapsed, detail), problems


def test_criterion_5_mode_equivalence(explored):
    results, explore_time = explored
    t0 = time.perf_counter()
    disagreements = [n for n, (_, e) in results.items()
                     if any(v.mode_disagreement for v in e.violations)]
    checks = sum(e.mode_checks for _, e in results.values())
    unchecked = [n for n, (_, e) in results.items() if e.mode_checks < e.states]
    # whole recorded schedules through simulate_modes as well
    replays = 0
    for name, (prog, e) in results.items():
        schedules = [v.schedule for v in e.violations]
        schedules += [X.run(prog, X.Seeded(s), FUEL).schedule for s in range(10)]
        for sch in schedules:
            replays += 1
            if not X.simulate_modes(prog, sch).agree:
                disagreements.append(f"{name} {sch.to_text()}")
    elapsed = explore_time + time.perf_counter() - t0
    ok = not disagreements and not unchecked
    detail = f"{checks} lockstep state checks, {replays} replayed schedules, {len(disagreements)} disagreements"
    assert _record(5, "cyclic/standard simulation", ok, elapsed, detail), disagreements[:5]


# ---------------------------------------------------------------------------
# 6: out-of-bounds is safe
# ---------------------------------------------------------------------------

def test_criterion_6_oob_is_safe():
    t0 = time.perf_counter()
    e = C.entry("oob")
    typed = K.decl_types(e.program())["main"] == T.INT
    outcomes, all_safe = set(), True
    for mode in R.MODES:
        rep = X.run(e.expr(), X.Seeded(0), FUEL, mode, keep_verdicts=True)
        outcomes.add(rep.outcome)
        all_safe &= all(v.safe and v.disentangled for v in rep.verdicts)
        all_safe &= rep.verdicts[-1].classification == M.OOB_STUCK
    elapsed = time.perf_counter() - t0
    ok = typed and outcomes == {X.OOB_STUCK} and all_safe
    detail = f"typed={typed} outcomes={sorted(outcomes)} every verdict safe={all_safe}"
    assert _record(6, "OOB halts safely", ok, elapsed, detail)


# ---------------------------------------------------------------------------
# 7: functional oracles
# ---------------------------------------------------------------------------

def tree_leaves(v) -> list[int]:
    """In-order leaves of a flattened tree value."""
    tag, payload = v
    if tag == "inj1":
        return [payload]
    left, right = payload
    return tree_leaves(left) + tree_leaves(right)


def final_value(src: str, seed: int, mode: str = R.CYCLIC):
    rep = X.run(C.program(src), X.Seeded(seed), FUEL, mode)
    assert rep.outcome == X.FINAL_VALUE, rep.outcome
    return R.flatten_value(rep.final.store, rep.value)


def test_criterion_7_oracles():
    t0 = time.perf_counter()
    problems = []
    for n in range(4):
        for x in (0, 5):
            for seed in range(3):
                got = tree_leaves(final_value(C.build_source(n, x), seed, R.MODES[seed % 2]))
                if got != list(range(x, x + 2 ** n)):
                    problems.append(f"build {n} {x}: {got}")
    values = [3, 1, 3, 2, 1, 5, 2, 3]
    src = C.dedup_source(values)
    for seed in range(100):
        got = final_value(src, seed, R.MODES[seed % 2])
        if sorted(got) != sorted(set(values)):
            problems.append(f"dedup seed {seed}: {got}")
    for n in (1, 2):
        for seed in range(5):
            if final_value(C.selectmap_source(n, "false"), seed) is not True:
                problems.append(f"selectmap {n} seed {seed} copied the tree")
    elapsed = time.perf_counter() - t0
    detail = "build flatten n<=3, dedup set over 100 seeds, selectmap sharing"
    assert _record(7, "oracles", not problems, elapsed, detail + (f"; {problems[:3]}" if problems else "")), problems


# ---------------------------------------------------------------------------
# 8: property suites
# ---------------------------------------------------------------------------

_property_times: dict[str, float] = {}


@pytest.mark.parametrize("name", list(P.PROPERTIES))
def test_criterion_8_property_suite(name):
    t0 = time.perf_counter()
    P.COUNTS[name] = 0
    P.PROPERTIES[name]()
    _property_times[name] = time.perf_counter() - t0
    counts = {n: P.COUNTS[n] for n in _property_times}
    complete = len(counts) == len(P.PROPERTIES)
    ok = complete and all(c >= P.EXAMPLES for c in counts.values())
    detail = ", ".join(f"{n}={c}" for n, c in counts.items())
    if not complete:
        detail += f" ({len(counts)}/{len(P.PROPERTIES)} suites so far)"
    elapsed = sum(_property_times.values())
    _record(8, "property suites", ok, elapsed, detail)
    assert P.COUNTS[name] >= P.EXAMPLES, P.COUNTS[name]
    assert elapsed < LIMITS[8]


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
