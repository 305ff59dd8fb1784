"""Disentanglement and safety verdicts over runtime configurations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from typedis.runtime import (FORK, JOIN, STEP, STUCK, Configuration, Fault, Fork, OOBFault,
                             Position, ShapeMismatch, Task, head_step, leaves, positions,
                             run_leaves)

FINAL = "Final"
REDUCIBLE = "Reducible"
OOB_STUCK = "OOBStuck"
HARD_STUCK = "HardStuck"

__all__ = ["FINAL", "REDUCIBLE", "OOB_STUCK", "HARD_STUCK", "ShapeMismatch", "Witness",
           "Verdict", "disentangled", "oob", "classify", "safe", "verdict",
           "detect_acquisition", "acquisitions_ok"]


@dataclass(frozen=True)
class Witness:
    """A root ``loc`` held at task ``ts`` (tree position ``path``) that ``alloc_ts`` does not precede."""

    path: tuple
    loc: int
    alloc_ts: Optional[int]
    ts: int
    leaves: tuple

    def __str__(self):
        return (f"#{self.loc} (allocated by {self.alloc_ts}) held at task {self.ts}"
                f" path {list(self.path)}")


@dataclass(frozen=True)
class Verdict:
    disentangled: bool
    safe: bool
    classification: str
    witnesses: tuple = ()


def disentangled(cfg: Configuration) -> tuple[bool, tuple[Witness, ...]]:
    """Check every root of every task against the computation graph.

    A task's roots are the locations in its expression; a suspended task's
    context roots must be visible to every task below it.  Tasks and contexts
    already found clean are skipped: allocation stamps never change and no edge
    into a live task's timestamp appears after it starts.
    """
    out: list[tuple] = []
    _scan(cfg, cfg.run, (), out)
    if not out:
        return True, ()
    all_leaves = tuple(leaves(cfg.tree))
    return False, tuple(Witness(p, l.id, a, t, all_leaves) for p, l, a, t in out)


def _check(cfg, locs, ts, path, out) -> bool:
    anc = cfg.graph.ancestors(ts)
    amap = cfg.allocmap
    ok = True
    for loc in locs:
        a = amap.get(loc)
        if a is None or a not in anc:
            out.append((path, loc, a, ts))
            ok = False
    return ok


def _scan(cfg, run, path, out) -> bool:
    if run.clean:
        return True
    if type(run) is Task:
        run.clean = _check(cfg, run.roots, run.ts, path, out)
        return run.clean
    if not run.ctx_clean:
        kl = run.ctx.locs if run.ctx is not None else ()
        ok = True
        for t in run_leaves(run) if kl else ():
            ok = _check(cfg, kl, t, path, out) and ok
        run.ctx_clean = ok
    left = _scan(cfg, run.left, path + (0,), out)
    right = _scan(cfg, run.right, path + (1,), out)
    run.clean = run.ctx_clean and left and right
    return run.clean


def oob(store: dict, redex) -> bool:
    try:
        head_step(store, redex, 0)
    except OOBFault:
        return True
    except Fault:
        return False
    return False


def classify(cfg: Configuration, pos: Optional[list[Position]] = None) -> str:
    if cfg.final:
        return FINAL
    pos = positions(cfg) if pos is None else pos
    kinds = {p.kind for p in pos}
    if STUCK in kinds or not kinds:
        return HARD_STUCK
    if kinds & {STEP, FORK, JOIN}:
        return REDUCIBLE
    return OOB_STUCK


def safe(cfg: Configuration, pos: Optional[list[Position]] = None) -> Verdict:
    ok, wit = disentangled(cfg)
    c = classify(cfg, pos)
    return Verdict(ok, c != HARD_STUCK, c, wit)


verdict = safe


def detect_acquisition(cfg: Configuration, position: Position, value) -> bool:
    """Would bringing ``value`` into the task at ``position`` keep it disentangled?"""
    for loc in value.locs:
        a = cfg.allocmap.get(loc)
        if a is None or not cfg.graph.precedes(a, position.ts):
            return False
    return True


def acquisitions_ok(cfg: Configuration, position: Position) -> tuple[bool, tuple[Witness, ...]]:
    """Detector check for one step: every location it reads from the heap is visible."""
    if position.kind != STEP:
        return True, ()
    bad = []
    for v in position.head(cfg).acquired:
        for loc in v.locs:
            a = cfg.allocmap.get(loc)
            if a is None or not cfg.graph.precedes(a, position.ts):
                bad.append(Witness(position.path, loc.id, a, position.ts, tuple(leaves(cfg.tree))))
    return not bad, tuple(bad)
