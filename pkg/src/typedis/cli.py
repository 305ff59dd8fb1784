"""Command-line entry point: ``typedis check|run|fuzz|explore|graph|corpus``.

Exit codes: 0 ok/final, 1 type or parse error, 2 OOB-stuck, 3 hard-stuck,
4 entangled, 5 exploration budget exceeded, 64 usage error, 66 unreadable file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from typedis import checker as K
from typedis import corpus as C
from typedis import explorer as X
from typedis import runtime as R
from typedis import types as T
from typedis.surface import ParseError, elaborate_program, parse_program, print_type

EXIT_OK = 0
EXIT_TYPE = 1
EXIT_OOB = 2
EXIT_STUCK = 3
EXIT_ENTANGLED = 4
EXIT_BUDGET = 5
EXIT_USAGE = 64
EXIT_NOINPUT = 66

OUTCOME_EXIT = {X.FINAL_VALUE: EXIT_OK, X.FUEL_EXHAUSTED: EXIT_OK, X.SCHEDULE_END: EXIT_OK,
                X.OOB_STUCK: EXIT_OOB, X.HARD_STUCK: EXIT_STUCK, X.ENTANGLED: EXIT_ENTANGLED}

# Pinned parameters of the ``corpus`` subcommand.
CORPUS_SEED = 0
CORPUS_TRIALS = 50
CORPUS_FUEL = 100_000
SEEDS_SHOWN = 20


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    # ``corpus/x.dl2`` also names the bundled copy
    alt = C.corpus_dir().parent / p
    return alt if alt.exists() else p


def _read(path: str) -> tuple[Path, str]:
    p = _resolve(path)
    try:
        return p, p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise InputError(f"{path}: {err}") from err


def _load(path: str):
    p, text = _read(path)
    return elaborate_program(parse_program(text, str(p)))


def _fmt_value(cfg: R.Configuration, v) -> str:
    try:
        return repr(R.flatten_value(cfg.store, v))
    except (KeyError, TypeError):
        return repr(v)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    p, text = _read(args.file)
    prog = parse_program(text, str(p))
    try:
        types = K.decl_types(prog)
    except K.TypeCheckError as err:
        print(f"error: {err.diagnostic()}")
        return EXIT_TYPE
    for name, ty in types.items():
        print(f"{name} : {print_type(ty)}")
    return EXIT_OK


def cmd_run(args) -> int:
    prog = _load(args.file)
    if args.schedule:
        sched = X.Schedule.from_text(args.schedule)
        policy = X.Replay(sched)
        mode = sched.mode
    else:
        policy = X.Seeded(args.seed)
        mode = args.mode
    rep = X.run(prog, policy, args.fuel, mode, monitor=args.monitor, keep_trace=args.trace)
    if args.trace:
        for rec in rep.trace:
            print(rec.to_json())
    print(f"outcome: {rep.outcome}")
    print(f"steps: {rep.steps}")
    if rep.value is not None:
        print(f"value: {_fmt_value(rep.final, rep.value)}")
    if rep.first_violation is not None:
        step, wit = rep.first_violation
        print(f"entangled at step {step}:")
        for w in wit:
            print(f"  {w}")
    if rep.first_unsafe is not None:
        print(f"unsafe at step {rep.first_unsafe[0]}: {rep.first_unsafe[1]}")
    print(f"schedule: {rep.schedule.to_text()}")
    if rep.first_violation is not None:
        return EXIT_ENTANGLED
    return OUTCOME_EXIT[rep.outcome]


def cmd_fuzz(args) -> int:
    prog = _load(args.file)
    s = X.fuzz(prog, args.trials, args.fuel, args.mode, base_seed=args.seed,
               monitor=args.monitor)
    outcomes = " ".join(f"{k}={v}" for k, v in sorted(s.outcomes.items()))
    print(f"trials: {s.trials} violations: {s.violations} unsafe: {s.unsafe} {outcomes}")
    if s.violating_seeds:
        shown = s.violating_seeds[:SEEDS_SHOWN]
        more = len(s.violating_seeds) - len(shown)
        print("replay seeds: " + " ".join(map(str, shown)) + (f" (+{more} more)" if more else ""))
        print(f"replay with: run {args.file} --mode {args.mode} --seed {s.violating_seeds[0]}")
        return EXIT_ENTANGLED
    return EXIT_OK if s.unsafe == 0 else EXIT_STUCK


def cmd_explore(args) -> int:
    prog = _load(args.file)
    try:
        e = X.explore(prog, args.steps, args.mode, state_cap=args.max_states,
                      compare_modes=args.compare_modes)
    except X.BudgetExceeded as err:
        print(f"budget exceeded: {err}")
        return EXIT_BUDGET
    print(f"states: {e.states} transitions: {e.transitions} finals: {e.finals}"
          f" truncated: {e.truncated} max_depth: {e.max_depth} violations: {len(e.violations)}")
    for v in e.violations[:args.show]:
        kind = "mode disagreement" if v.mode_disagreement else v.classification
        print(f"violation ({kind}): {v.schedule.to_text()}")
        for w in v.witnesses:
            print(f"  {w}")
    return EXIT_ENTANGLED if e.violations else EXIT_OK


def graph_dot(cfg: R.Configuration, trace) -> str:
    """DOT rendering of ``cfg``'s computation graph; join edges are drawn in colour."""
    fork_edges = set()
    for rec in trace:
        if rec.rule == "SchedFork":
            fork_edges.update((rec.ts, t) for t in rec.new_ts)
    color = "red" if cfg.mode == R.CYCLIC else "blue"
    lines = [f'digraph "{cfg.mode}" {{', "  node [shape=circle];"]
    for v in sorted(cfg.graph.vertices()):
        lines.append(f'  t{v} [label="{v}"];')
    for x, y in sorted(cfg.graph.edges):
        if x == y:
            continue
        if (x, y) in fork_edges:
            lines.append(f"  t{x} -> t{y};")
        else:
            extra = ", constraint=false" if cfg.mode == R.CYCLIC else ""
            lines.append(f'  t{x} -> t{y} [color={color}, label="join"{extra}];')
    lines.append("}")
    return "\n".join(lines)


def cmd_graph(args) -> int:
    prog = _load(args.file)
    rep = X.run(prog, X.Seeded(args.seed), args.fuel, args.mode, keep_trace=True)
    print(graph_dot(rep.final, rep.trace))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Corpus suite
# ---------------------------------------------------------------------------


def check_entry(e: C.CorpusEntry, trials: int = CORPUS_TRIALS) -> list[str]:
    """Problems with one corpus entry (empty when every expectation holds)."""
    problems = []
    prog = e.program()
    try:
        got = K.decl_types(prog)
        if e.error is not None:
            problems.append(f"expected {e.error} but the program checks")
        for name, want in e.expected_types().items():
            if name not in got:
                problems.append(f"no definition {name}")
            elif not T.alpha_eq(got[name], want):
                problems.append(f"{name} : {print_type(got[name])}, expected {print_type(want)}")
    except K.TypeCheckError as err:
        if e.error is None:
            problems.append(f"unexpected type error {err}")
        elif err.rule != e.error:
            problems.append(f"rejected by {err.rule}, expected {e.error}")
    expr = elaborate_program(prog)
    for mode in R.MODES:
        if e.outcome is not None:
            rep = X.run(expr, X.Seeded(CORPUS_SEED), CORPUS_FUEL, mode)
            if rep.outcome != e.outcome:
                problems.append(f"{mode} run ended {rep.outcome}, expected {e.outcome}")
        if e.fuzz is not None:
            s = X.fuzz(expr, trials, CORPUS_FUEL, mode, base_seed=CORPUS_SEED)
            found = "clean" if s.clean else "entangled"
            if found != e.fuzz:
                problems.append(f"{mode} fuzz found {found}, expected {e.fuzz}")
    return problems


def cmd_corpus(args) -> int:
    failed = 0
    for e in C.entries():
        problems = check_entry(e, args.trials)
        status = "ok" if not problems else "FAIL"
        print(f"{e.name:18s} {status}")
        for pr in problems:
            print(f"  {pr}")
        failed += bool(problems)
    print(f"{failed} failing entr{'y' if failed == 1 else 'ies'}")
    return EXIT_OK if not failed else EXIT_TYPE


# ---------------------------------------------------------------------------


def _nat(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="typedis", description="Type checker and instrumented interpreter "
                 "for a disentangled parallel language.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def mode_opt(p):
        p.add_argument("--mode", choices=R.MODES, default=R.CYCLIC)

    p = sub.add_parser("check", help="type-check a program")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="run one seeded schedule")
    p.add_argument("file")
    p.add_argument("--seed", type=_nat, default=0)
    p.add_argument("--fuel", type=_nat, default=100_000)
    mode_opt(p)
    p.add_argument("--monitor", choices=("scan", "detect"), default="scan")
    p.add_argument("--schedule", help="replay a schedule printed by explore or run")
    p.add_argument("--trace", action="store_true", help="print one JSON line per step")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuzz", help="many seeded runs")
    p.add_argument("file")
    p.add_argument("--trials", type=_nat, default=1000)
    p.add_argument("--fuel", type=_nat, default=100_000)
    p.add_argument("--seed", type=_nat, default=0, help="first seed")
    mode_opt(p)
    p.add_argument("--monitor", choices=("scan", "detect"), default="scan")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("explore", help="enumerate every schedule up to a step bound")
    p.add_argument("file")
    p.add_argument("--steps", type=_nat, default=200)
    mode_opt(p)
    p.add_argument("--max-states", type=_nat, default=200_000)
    p.add_argument("--compare-modes", action="store_true")
    p.add_argument("--show", type=_nat, default=3, help="violations to print")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("graph", help="print the final computation graph as DOT")
    p.add_argument("file")
    p.add_argument("--seed", type=_nat, default=0)
    p.add_argument("--fuel", type=_nat, default=100_000)
    mode_opt(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("corpus", help="check every bundled program against its expectations")
    p.add_argument("--trials", type=_nat, default=CORPUS_TRIALS)
    p.set_defaults(func=cmd_corpus)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NOINPUT
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TYPE
    except X.ScheduleInvalid as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
