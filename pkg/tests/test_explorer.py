import pytest

from typedis import corpus as C
from typedis import explorer as X
from typedis import runtime as R
from typedis.ast import Int
from typedis.surface import parse_expr


def prog(name):
    return C.entry(name).expr()


@pytest.mark.parametrize("name", C.POSITIVE + ("entangled",))
def test_recorded_outcome(name):
    e = C.entry(name)
    rep = X.run(e.expr(), X.Seeded(0))
    assert rep.outcome == e.outcome


def test_replay_is_deterministic():
    p = prog("dedup")
    first = X.run(p, X.Seeded(11), keep_trace=True)
    again = X.run(p, X.Replay(first.schedule), keep_trace=True)
    assert again.outcome == first.outcome and again.steps == first.steps
    assert again.value == first.value
    assert again.trace == first.trace
    text = first.schedule.to_text()
    assert X.Schedule.from_text(text) == first.schedule


def test_short_replay_ends_early():
    p = prog("par2")
    full = X.run(p, X.Seeded(0))
    cut = X.Schedule(full.schedule.choices[:5], None, R.CYCLIC)
    rep = X.run(p, X.Replay(cut))
    assert rep.outcome == X.SCHEDULE_END and rep.steps == 5


def test_bad_replay_choice():
    with pytest.raises(X.ScheduleInvalid):
        X.run(parse_expr("1 + 2"), X.Replay(X.Schedule([3])))


def test_fuel_exhaustion_is_not_a_violation():
    rep = X.run(prog("build"), X.Seeded(0), fuel=10)
    assert rep.outcome == X.FUEL_EXHAUSTED and rep.steps == 10
    assert rep.clean


def test_explore_entangled_finds_a_violation():
    res = X.explore(prog("entangled"), step_bound=400)
    assert res.violations
    v = res.violations[0]
    rep = X.run(prog("entangled"), X.Replay(v.schedule), stop_on_violation=True)
    assert rep.first_violation is not None
    assert rep.first_violation[0] == len(v.schedule.choices)


def test_explore_disentangled_is_clean():
    res = X.explore(prog("disentangled"), step_bound=400)
    assert res.clean and res.truncated == 0 and res.finals > 0


def test_explore_budget():
    with pytest.raises(X.BudgetExceeded):
        X.explore(prog("par2"), state_cap=10)


def test_explore_is_sound_for_reached_finals():
    """Every explored state is also checked against its standard-mode twin,
    and exploration reaches at least as deep as a seeded run."""
    p = prog("par2")
    res = X.explore(p, compare_modes=True)
    assert res.clean and res.mode_checks == res.states
    assert res.max_depth >= X.run(p, X.Seeded(0)).steps


def test_simulate_modes_sequential():
    p = prog("closures")
    sched = X.run(p, X.Seeded(0)).schedule
    cmp = X.simulate_modes(p, sched)
    assert cmp.agree and cmp.steps == len(sched.choices)


@pytest.mark.parametrize("seed", range(5))
def test_simulate_modes_with_a_fork(seed):
    p = prog("par2")
    sched = X.run(p, X.Seeded(seed)).schedule
    assert X.simulate_modes(p, sched).agree


def test_detect_monitor_halts_on_acquisition():
    s = X.fuzz(prog("entangled"), trials=50, monitor="detect")
    assert s.violations > 0
    assert s.outcomes.get(X.ENTANGLED) == s.violations


def test_fuzz_entangled_reports_seeds():
    s = X.fuzz(prog("entangled"), trials=50)
    assert s.violations > 0 and len(s.violating_seeds) == s.violations
    rep = X.run(prog("entangled"), X.Seeded(s.violating_seeds[0]))
    assert rep.first_violation is not None


def test_fuzz_value_program():
    s = X.fuzz(parse_expr("let x = 1 in x + 1"), trials=5)
    assert s.clean and s.outcomes == {X.FINAL_VALUE: 5}
    assert X.run(parse_expr("let x = 1 in x + 1")).value == Int(2)


@pytest.mark.parametrize("mode", R.MODES)
def test_fuzz_dedup_eight(mode):
    s = X.fuzz(C.program(C.dedup_source([5, 3, 5, 1, 3, 8, 1, 2])), trials=1000
               if mode == R.CYCLIC else 100, mode=mode)
    assert s.clean and s.outcomes == {X.FINAL_VALUE: s.trials}


@pytest.mark.parametrize("src", [
    C.build_source(3), C.parfor_source(6), C.selectmap_source(2),
], ids=["build3", "parfor6", "selectmap2"])
def test_larger_instances_stay_clean(src):
    for mode in R.MODES:
        s = X.fuzz(C.program(src), trials=15, mode=mode)
        assert s.clean and s.outcomes == {X.FINAL_VALUE: 15}
