"""Schedule exploration: seeded runs, replay, exhaustive search, mode comparison."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union

from typedis import ast as A
from typedis import monitor as M
from typedis import runtime as R
from typedis.ast import ArrayBlock, ClosureBlock, InjBlock, PairBlock

FINAL_VALUE = "FinalValue"
OOB_STUCK = "OOBStuck"
HARD_STUCK = "HardStuck"
FUEL_EXHAUSTED = "FuelExhausted"
ENTANGLED = "Entangled"  # detector mode halted on an acquisition
SCHEDULE_END = "ScheduleEnd"  # a replayed schedule ran out before the program did


@dataclass
class Schedule:
    choices: list[int] = field(default_factory=list)
    seed: Optional[int] = None
    mode: str = R.CYCLIC

    def to_text(self) -> str:
        return f"mode={self.mode} seed={self.seed} choices={','.join(map(str, self.choices))}"

    @staticmethod
    def from_text(text: str) -> Schedule:
        fields = dict(part.split("=", 1) for part in text.split())
        seed = fields.get("seed", "None")
        raw = fields.get("choices", "")
        return Schedule([int(c) for c in raw.split(",") if c],
                        None if seed == "None" else int(seed), fields.get("mode", R.CYCLIC))


@dataclass(frozen=True)
class Seeded:
    seed: int


@dataclass(frozen=True)
class Replay:
    schedule: Schedule


Policy = Union[Seeded, Replay]


@dataclass
class RunReport:
    outcome: str
    steps: int
    schedule: Schedule
    value: Optional[A.Value] = None
    final: Optional[R.Configuration] = None
    first_violation: Optional[tuple[int, tuple]] = None
    first_unsafe: Optional[tuple[int, str]] = None
    verdicts: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.first_violation is None and self.first_unsafe is None


class ScheduleInvalid(Exception):
    pass


def run(program: A.Expr, policy: Policy = Seeded(0), fuel: int = 100_000,
        mode: str = R.CYCLIC, monitor: str = "scan", keep_verdicts: bool = False,
        keep_trace: bool = False, stop_on_violation: bool = False) -> RunReport:
    """Run to completion (or fuel exhaustion), checking the monitor at every configuration.

    ``monitor="scan"`` checks the whole configuration after every step;
    ``monitor="detect"`` only checks values acquired by head steps and halts
    on the first failing one.
    """
    if isinstance(policy, Replay):
        mode = policy.schedule.mode
        script = policy.schedule.choices
        rng = None
        sched = Schedule([], policy.schedule.seed, mode)
    else:
        script = None
        rng = random.Random(policy.seed)
        sched = Schedule([], policy.seed, mode)
    cfg = R.initial(program, mode)
    report = RunReport(FUEL_EXHAUSTED, 0, sched)
    step = 0
    while True:
        pos = R.positions(cfg)
        if monitor == "scan":
            ok, wit = M.disentangled(cfg)
            cls = M.classify(cfg, pos)
            if keep_verdicts:
                report.verdicts.append(M.Verdict(ok, cls != M.HARD_STUCK, cls, wit))
            if not ok and report.first_violation is None:
                report.first_violation = (step, wit)
                if stop_on_violation:
                    report.outcome = ENTANGLED
                    break
            if cls == M.HARD_STUCK and report.first_unsafe is None:
                report.first_unsafe = (step, cls)
        en = [p for p in pos if p.steppable]
        if not en:
            report.outcome = _final_outcome(cfg, pos)
            if report.outcome == FINAL_VALUE:
                report.value = cfg.expr
            break
        if step >= fuel:
            break
        if script is not None:
            if step >= len(script):
                report.outcome = SCHEDULE_END
                break
            k = script[step]
            if not 0 <= k < len(en):
                raise ScheduleInvalid(f"choice {k} at step {step} with {len(en)} enabled")
        else:
            k = rng.randrange(len(en)) if len(en) > 1 else 0
        p = en[k]
        if monitor == "detect":
            ok, wit = M.acquisitions_ok(cfg, p)
            if not ok:
                report.first_violation = (step + 1, wit)
                report.outcome = ENTANGLED
                sched.choices.append(k)
                break
        rec = R.apply(cfg, p, step)
        sched.choices.append(k)
        if keep_trace:
            report.trace.append(rec)
        step += 1
    report.steps = step
    report.final = cfg
    return report


def _final_outcome(cfg, pos) -> str:
    c = M.classify(cfg, pos)
    return {M.FINAL: FINAL_VALUE, M.OOB_STUCK: OOB_STUCK}.get(c, HARD_STUCK)


# ---------------------------------------------------------------------------
# Canonical hashing of configurations
# ---------------------------------------------------------------------------


class _Canon:
    def __init__(self, cfg: R.Configuration):
        self.cfg = cfg
        self.locs: dict[int, int] = {}
        self.order: list[A.Loc] = []
        self.ts: dict[int, int] = {}

    def loc(self, l: A.Loc) -> int:
        n = self.locs.get(l.id)
        if n is None:
            n = self.locs[l.id] = len(self.locs)
            self.order.append(l)
        return n

    def stamp(self, t: int) -> int:
        n = self.ts.get(t)
        if n is None:
            n = self.ts[t] = len(self.ts)
        return n

    def expr(self, e: A.Expr):
        if not e.locs:
            return e  # location-free subterms are already canonical
        if type(e) is A.Loc:
            return ("#", self.loc(e))
        return (type(e).__name__, *[self.expr(k) for k in e.children()],
                *_extras(e))

    def tree(self, t):
        if isinstance(t, R.Leaf):
            return self.stamp(t.ts)
        return (self.stamp(t.ts), self.tree(t.left), self.tree(t.right))

    def block(self, b):
        match b:
            case ArrayBlock(cells):
                return ("A", tuple(self.expr(c) for c in cells))
            case PairBlock(l, r):
                return ("P", self.expr(l), self.expr(r))
            case InjBlock(i, p):
                return ("I", i, self.expr(p))
            case ClosureBlock(f, params, _, body):
                return ("C", f, params, self.expr(body))

    def key(self):
        cfg = self.cfg
        tree = self.tree(cfg.tree)
        expr = self.expr(cfg.expr)
        blocks = []
        i = 0
        while i < len(self.order):
            l = self.order[i]
            blocks.append((self.block(cfg.store[l]), self.stamp(cfg.allocmap[l])))
            i += 1
        named = list(self.ts.items())
        prec = frozenset((a, b) for ta, a in named for tb, b in named
                         if a != b and cfg.graph.precedes(ta, tb))
        return (tree, expr, tuple(blocks), prec)


def _extras(e):
    match e:
        case A.Let(name, _, _):
            return (name,)
        case A.Prim(op, _, _):
            return (op,)
        case A.Lam(f, params, _, _):
            return (f, params)
        case A.Proj(i, _) | A.Inj(i, _, _):
            return (i,)
        case A.Case(_, x1, _, x2, _):
            return (x1, x2)
    return ()


def canonical_key(cfg: R.Configuration):
    """Hashable key identifying ``cfg`` up to renaming of locations and timestamps."""
    return _Canon(cfg).key()


# ---------------------------------------------------------------------------
# Exhaustive exploration
# ---------------------------------------------------------------------------


class BudgetExceeded(Exception):
    pass


@dataclass
class Violation:
    schedule: Schedule
    witnesses: tuple
    classification: str
    mode_disagreement: bool = False


@dataclass
class Exploration:
    states: int = 0
    transitions: int = 0
    finals: int = 0
    max_depth: int = 0
    truncated: int = 0  # states cut off by the step bound
    violations: list[Violation] = field(default_factory=list)
    mode_checks: int = 0

    @property
    def clean(self) -> bool:
        return not self.violations


def explore(program: A.Expr, step_bound: int = 200, mode: str = R.CYCLIC,
            state_cap: int = 200_000, compare_modes: bool = False,
            max_violations: int = 50) -> Exploration:
    """Depth-first enumeration of every schedule up to ``step_bound`` steps.

    Configurations are memoized by canonical key (with the remaining step
    budget), so schedules that only differ in fresh names are explored once.
    With ``compare_modes`` a standard-mode twin is stepped in lockstep and any
    difference in expression, store or disentanglement verdict is reported.
    """
    res = Exploration()
    start = R.initial(program, mode)
    twin0 = R.initial(program, R.STANDARD if mode == R.CYCLIC else R.CYCLIC) if compare_modes else None
    seen: dict = {}
    stack = [(start, twin0, [])]
    while stack:
        cfg, twin, choices = stack.pop()
        key = canonical_key(cfg)
        if compare_modes:
            key = (key, canonical_key(twin))
        depth = len(choices)
        prev = seen.get(key)
        if prev is not None and prev <= depth:
            continue
        if prev is None:
            res.states += 1
            if res.states > state_cap:
                raise BudgetExceeded(f"more than {state_cap} canonical states")
        seen[key] = depth
        res.max_depth = max(res.max_depth, depth)
        pos = R.positions(cfg)
        v = M.safe(cfg, pos)
        if not (v.disentangled and v.safe) and len(res.violations) < max_violations:
            res.violations.append(Violation(Schedule(list(choices), None, mode), v.witnesses,
                                            v.classification))
        if compare_modes:
            res.mode_checks += 1
            if not _agree(cfg, twin) and len(res.violations) < max_violations:
                res.violations.append(Violation(Schedule(list(choices), None, mode), (),
                                                v.classification, mode_disagreement=True))
        en = [p for p in pos if p.steppable]
        if not en:
            res.finals += 1
            continue
        if depth >= step_bound:
            res.truncated += 1
            continue
        twin_en = [p for p in R.enabled(twin)] if compare_modes else None
        for k in reversed(range(len(en))):
            nxt = cfg.copy()
            R.apply(nxt, en[k])
            res.transitions += 1
            nt = None
            if compare_modes:
                nt = twin.copy()
                R.apply(nt, twin_en[k])
            stack.append((nxt, nt, choices + [k]))
    return res


def _agree(a: R.Configuration, b: R.Configuration) -> bool:
    return (a.expr == b.expr and a.store == b.store
            and M.disentangled(a)[0] == M.disentangled(b)[0])


# ---------------------------------------------------------------------------
# Mode simulation
# ---------------------------------------------------------------------------


@dataclass
class ModeComparison:
    agree: bool
    divergence: Optional[int] = None
    steps: int = 0
    reason: str = ""


def simulate_modes(program: A.Expr, schedule: Schedule) -> ModeComparison:
    """Replay one choice sequence in both graph modes and compare at every step."""
    a = R.initial(program, R.CYCLIC)
    b = R.initial(program, R.STANDARD)
    for i in range(len(schedule.choices) + 1):
        if a.expr != b.expr:
            return ModeComparison(False, i, i, "expressions differ")
        if a.store != b.store:
            return ModeComparison(False, i, i, "stores differ")
        if M.disentangled(a)[0] != M.disentangled(b)[0]:
            return ModeComparison(False, i, i, "disentanglement verdicts differ")
        if i == len(schedule.choices):
            break
        k = schedule.choices[i]
        ea, eb = R.enabled(a), R.enabled(b)
        if not 0 <= k < len(ea):
            raise ScheduleInvalid(f"choice {k} invalid at step {i}")
        if not 0 <= k < len(eb) or ea[k].path != eb[k].path:
            return ModeComparison(False, i, i, "schedule invalid in the other mode")
        R.apply(a, ea[k], i)
        R.apply(b, eb[k], i)
    return ModeComparison(True, None, len(schedule.choices))


# ---------------------------------------------------------------------------
# Fuzzing
# ---------------------------------------------------------------------------


@dataclass
class FuzzSummary:
    trials: int
    violations: int
    unsafe: int
    outcomes: dict
    violating_seeds: list[int]
    witnesses: set
    reports: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.violations == 0 and self.unsafe == 0


def fuzz(program: A.Expr, trials: int = 1000, fuel: int = 100_000, mode: str = R.CYCLIC,
         base_seed: int = 0, keep_reports: bool = False, stop_on_violation: bool = True,
         monitor: str = "scan") -> FuzzSummary:
    s = FuzzSummary(trials, 0, 0, {}, [], set())
    for seed in range(base_seed, base_seed + trials):
        rep = run(program, Seeded(seed), fuel, mode, monitor=monitor,
                  stop_on_violation=stop_on_violation)
        s.outcomes[rep.outcome] = s.outcomes.get(rep.outcome, 0) + 1
        if rep.first_violation is not None:
            s.violations += 1
            s.violating_seeds.append(seed)
            s.witnesses.update((w.loc, w.alloc_ts, w.ts) for w in rep.first_violation[1])
        if rep.first_unsafe is not None:
            s.unsafe += 1
        if keep_reports:
            s.reports.append(rep)
    return s
