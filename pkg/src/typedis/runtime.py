"""Instrumented fork-join semantics.

A configuration holds the store, the allocation map, the computation graph,
the task tree and the program expression.  Tasks are addressed by their path
in the task tree (a tuple of 0/1 choices).  Head reduction is computed as a
pure description (``HeadResult``) and then committed, which lets the
scheduler inspect what a step would do before taking it.

Two computation-graph modes are supported: ``cyclic`` resumes the forking
task under its own timestamp at a join, ``standard`` mints a fresh one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from typedis import ast as A
from typedis.ast import (ArrayBlock, Block, ClosureBlock, InjBlock, Loc, PairBlock, Value)

CYCLIC = "cyclic"
STANDARD = "standard"
MODES = (CYCLIC, STANDARD)

ROOT_TS = 0


class Fault(Exception):
    kind = "fault"


class OOBFault(Fault):
    kind = "oob"


class StuckFault(Fault):
    kind = "stuck"


class SortMismatch(StuckFault):
    pass


class InvalidPosition(Exception):
    pass


# ---------------------------------------------------------------------------
# Task trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    ts: int


@dataclass(frozen=True)
class Node:
    ts: int
    left: TaskTree
    right: TaskTree


TaskTree = Union[Leaf, Node]


def tree_at(tree: TaskTree, path) -> TaskTree:
    for side in path:
        if not isinstance(tree, Node):
            raise InvalidPosition(f"path {path} runs past a leaf")
        tree = tree.right if side else tree.left
    return tree


def tree_replace(tree: TaskTree, path, new: TaskTree) -> TaskTree:
    if not path:
        return new
    if not isinstance(tree, Node):
        raise InvalidPosition(f"path {path} runs past a leaf")
    if path[0]:
        return Node(tree.ts, tree.left, tree_replace(tree.right, path[1:], new))
    return Node(tree.ts, tree_replace(tree.left, path[1:], new), tree.right)


def leaves(tree: TaskTree) -> list[int]:
    if isinstance(tree, Leaf):
        return [tree.ts]
    return leaves(tree.left) + leaves(tree.right)


# ---------------------------------------------------------------------------
# Computation graphs
# ---------------------------------------------------------------------------


class CompGraph:
    """Edges between runtime timestamps plus a memo of ancestor sets."""

    def __init__(self, mode: str = CYCLIC, edges=None):
        if mode not in MODES:
            raise ValueError(f"unknown graph mode {mode!r}")
        self.mode = mode
        self.edges: set[tuple[int, int]] = set(edges) if edges is not None else {(ROOT_TS, ROOT_TS)}
        self._pred: dict[int, list[int]] = {}
        for x, y in self.edges:
            self._pred.setdefault(y, []).append(x)
        self._anc: dict[int, frozenset] = {}

    def copy(self) -> CompGraph:
        g = CompGraph.__new__(CompGraph)
        g.mode = self.mode
        g.edges = set(self.edges)
        g._pred = {k: list(v) for k, v in self._pred.items()}
        g._anc = dict(self._anc)
        return g

    def add(self, x: int, y: int):
        if (x, y) in self.edges:
            return
        self.edges.add((x, y))
        self._pred.setdefault(y, []).append(x)
        self._anc.clear()

    def vertices(self) -> set[int]:
        return {v for e in self.edges for v in e}

    def ancestors(self, t: int) -> frozenset:
        """Every timestamp that precedes ``t`` (including ``t``)."""
        got = self._anc.get(t)
        if got is None:
            seen = {t}
            todo = [t]
            while todo:
                for p in self._pred.get(todo.pop(), ()):
                    if p not in seen:
                        seen.add(p)
                        todo.append(p)
            got = self._anc[t] = frozenset(seen)
        return got

    def precedes(self, t1: int, t2: int) -> bool:
        return t1 == t2 or t1 in self.ancestors(t2)


def precedes(graph: CompGraph, t1: int, t2: int) -> bool:
    return graph.precedes(t1, t2)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def _ints(op, a, b):
    if type(a) is not A.Int or type(b) is not A.Int:
        raise SortMismatch(f"{op} expects integers, got {a} and {b}")
    return a.value, b.value


def _bools(op, a, b):
    if type(a) is not A.Bool or type(b) is not A.Bool:
        raise SortMismatch(f"{op} expects booleans, got {a} and {b}")
    return a.value, b.value


def values_equal(a: Value, b: Value) -> bool:
    """Structural on unboxed values, identity on locations."""
    if type(a) is not type(b):
        raise SortMismatch(f"== on values of different sorts: {a} and {b}")
    return a == b


def pure_prim_step(op: str, a: Value, b: Value) -> Value:
    match op:
        case "+":
            x, y = _ints(op, a, b)
            return A.Int(x + y)
        case "-":
            x, y = _ints(op, a, b)
            return A.Int(x - y)
        case "*":
            x, y = _ints(op, a, b)
            return A.Int(x * y)
        case "/":
            x, y = _ints(op, a, b)
            return A.Int(0 if y == 0 else x // y)
        case "mod":
            x, y = _ints(op, a, b)
            return A.Int(0 if y == 0 else x % y)
        case "<" | "<=" | ">" | ">=":
            x, y = _ints(op, a, b)
            r = {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op]
            return A.TRUE if r else A.FALSE
        case "||":
            x, y = _bools(op, a, b)
            return A.Bool(x or y)
        case "&&":
            x, y = _bools(op, a, b)
            return A.Bool(x and y)
        case "==":
            return A.TRUE if values_equal(a, b) else A.FALSE
    raise SortMismatch(f"unknown primitive {op}")


# ---------------------------------------------------------------------------
# Head reduction
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class HeadResult:
    rule: str
    expr: A.Expr
    allocs: tuple[tuple[Loc, Block], ...] = ()
    writes: tuple[tuple[Loc, Block], ...] = ()
    acquired: tuple[Value, ...] = ()  # values entering the task's roots from the heap


def _block(store, v, cls, what):
    if type(v) is not Loc:
        raise StuckFault(f"{what} expects a location, got {v}")
    b = store.get(v)
    if b is None:
        raise StuckFault(f"dangling location {v}")
    if not isinstance(b, cls):
        raise StuckFault(f"{what} expects a {cls.__name__}, found {type(b).__name__}")
    return b


def _index(arr: ArrayBlock, i, what):
    if type(i) is not A.Int:
        raise StuckFault(f"{what} index must be an integer, got {i}")
    if not 0 <= i.value < len(arr.cells):
        raise OOBFault(f"{what} at index {i.value} of an array of length {len(arr.cells)}")
    return i.value


def head_step(store: dict, redex: A.Expr, next_loc: int) -> HeadResult:
    """Describe the head reduction of ``redex``; allocation uses ``next_loc``."""
    rule = _HEAD.get(type(redex))
    if rule is None:
        raise StuckFault(f"no head rule for {type(redex).__name__}")
    return rule(store, redex, next_loc)


def _h_let(store, r, n):
    return HeadResult("HeadLetVal", A.subst(r.body, {r.name: r.bound}))


def _h_if(store, r, n):
    c = r.cond
    if type(c) is not A.Bool:
        raise StuckFault(f"if on non-boolean {c}")
    return HeadResult("HeadIfTrue", r.then) if c.value else HeadResult("HeadIfFalse", r.orelse)


def _h_prim(store, r, n):
    return HeadResult("HeadCallPrim", pure_prim_step(r.op, r.left, r.right))


def _h_lam(store, r, n):
    loc = Loc(n)
    return HeadResult("HeadClosure", loc,
                      allocs=((loc, ClosureBlock(r.self_name, r.params, r.annot, r.body)),))


def _h_call(store, r, n):
    fn = r.fn
    clo = _block(store, fn, ClosureBlock, "call")
    if len(clo.params) != len(r.args):
        raise StuckFault(f"arity mismatch: {len(clo.params)} parameters, {len(r.args)} arguments")
    bindings = dict(zip(clo.params, r.args))
    bindings[clo.self_name] = fn
    return HeadResult("HeadCall", A.subst(clo.body, bindings), acquired=tuple(clo.body.locs))


def _h_pair(store, r, n):
    loc = Loc(n)
    return HeadResult("HeadPair", loc, allocs=((loc, PairBlock(r.left, r.right)),))


def _h_proj(store, r, n):
    p = _block(store, r.arg, PairBlock, "projection")
    out = p.left if r.index == 1 else p.right
    return HeadResult("HeadProj", out, acquired=(out,))


def _h_inj(store, r, n):
    loc = Loc(n)
    return HeadResult("HeadInj", loc, allocs=((loc, InjBlock(r.index, r.arg)),))


def _h_case(store, r, n):
    inj = _block(store, r.scrut, InjBlock, "case")
    x, e = (r.x1, r.e1) if inj.index == 1 else (r.x2, r.e2)
    return HeadResult("HeadCase", A.subst(e, {x: inj.payload}), acquired=(inj.payload,))


def _h_alloc(store, r, n):
    size = r.size
    if type(size) is not A.Int:
        raise StuckFault(f"alloc size must be an integer, got {size}")
    if size.value <= 0:
        raise OOBFault(f"alloc of size {size.value}")
    loc = Loc(n)
    return HeadResult("HeadAlloc", loc, allocs=((loc, ArrayBlock((r.init,) * size.value)),))


def _h_load(store, r, n):
    blk = _block(store, r.arr, ArrayBlock, "load")
    out = blk.cells[_index(blk, r.index, "load")]
    return HeadResult("HeadLoad", out, acquired=(out,))


def _h_store(store, r, n):
    blk = _block(store, r.arr, ArrayBlock, "store")
    k = _index(blk, r.index, "store")
    cells = blk.cells[:k] + (r.value,) + blk.cells[k + 1:]
    return HeadResult("HeadStore", A.UNIT_V, writes=((r.arr, ArrayBlock(cells)),))


def _h_length(store, r, n):
    blk = _block(store, r.arr, ArrayBlock, "length")
    return HeadResult("HeadLength", A.Int(len(blk.cells)))


def _h_cas(store, r, n):
    blk = _block(store, r.arr, ArrayBlock, "cas")
    k = _index(blk, r.index, "cas")
    if values_equal(blk.cells[k], r.old):
        cells = blk.cells[:k] + (r.new,) + blk.cells[k + 1:]
        return HeadResult("HeadCAS", A.TRUE, writes=((r.arr, ArrayBlock(cells)),))
    return HeadResult("HeadCAS", A.FALSE)


def _h_fold(store, r, n):
    return HeadResult("HeadFold", A.Folded(r.arg))


def _h_unfold(store, r, n):
    v = r.arg
    if type(v) is not A.Folded:
        raise StuckFault(f"unfold of non-folded value {v}")
    return HeadResult("HeadUnfold", v.value)


_HEAD = {A.Let: _h_let, A.If: _h_if, A.Prim: _h_prim, A.Lam: _h_lam, A.Call: _h_call,
         A.Pair: _h_pair, A.Proj: _h_proj, A.Inj: _h_inj, A.Case: _h_case, A.Alloc: _h_alloc,
         A.Load: _h_load, A.Store: _h_store, A.Length: _h_length, A.Cas: _h_cas,
         A.Fold: _h_fold, A.Unfold: _h_unfold}


# ---------------------------------------------------------------------------
# Running tasks
# ---------------------------------------------------------------------------


class ShapeMismatch(Exception):
    """The task tree and the expression disagree on where the parallel pairs are."""


class Ctx:
    """One cell of an evaluation context, innermost frame first.

    Each cell carries the locations of the whole context from itself outwards,
    so a task's roots are available without re-walking its context.
    """

    __slots__ = ("frame", "outer", "locs")

    def __init__(self, frame: A.Frame, outer: Optional[Ctx]):
        self.frame = frame
        self.outer = outer
        fl = frame.locs
        if outer is None:
            self.locs = fl
        else:
            self.locs = outer.locs | fl if fl else outer.locs


def ctx_frames(ctx: Optional[Ctx]) -> tuple[A.Frame, ...]:
    """The frames of ``ctx``, outermost first (the order ``ast.plug`` expects)."""
    out = []
    while ctx is not None:
        out.append(ctx.frame)
        ctx = ctx.outer
    return tuple(reversed(out))


def ctx_plug(ctx: Optional[Ctx], e: A.Expr) -> A.Expr:
    while ctx is not None:
        e = ctx.frame.plug(e)
        ctx = ctx.outer
    return e


def ctx_from_frames(frames) -> Optional[Ctx]:
    ctx = None
    for f in frames:
        ctx = Ctx(f, ctx)
    return ctx


def settle(ctx: Optional[Ctx], e: A.Expr) -> tuple[Optional[Ctx], A.Expr]:
    """Refocus ``ctx[e]`` on its next redex.

    Returns a context and focus where the focus is a head redex, a ``par``,
    something the interpreter cannot take apart (a variable, an annotation,
    an active pair), or a value with an empty context (a finished task).
    Only the part of the context above ``e`` is revisited.
    """
    values, opaque = _VALUE_TYPES, _OPAQUE_TYPES
    while True:
        t = type(e)
        if t in values:
            if ctx is None:
                return None, e
            e = ctx.frame.plug(e)
            ctx = ctx.outer
            continue
        if t in opaque:
            return ctx, e
        kids = e.children()
        n = len(kids) if e.n_eval is None else e.n_eval
        for i in range(n):
            if type(kids[i]) not in values:
                ctx = Ctx(A.Frame(e, i), ctx)
                e = kids[i]
                break
        else:
            return ctx, e


_VALUE_TYPES = frozenset({A.Unit, A.Bool, A.Int, A.Loc, A.Folded})
# foci the interpreter cannot take apart
_OPAQUE_TYPES = frozenset({A.RunPar, A.Var, *A.ANNOTATION_NODES})


class Task:
    """A running task: timestamp, evaluation context and focus (see ``settle``).

    Tasks are never mutated apart from two caches: the classification of the
    focus, and whether its roots were already found disentangled.  Both are
    exact for the lifetime of the object, including in configurations copied
    from one another, because a location's block kind and array length never
    change and no edge into a live task's timestamp is added after it starts.
    """

    __slots__ = ("ts", "ctx", "focus", "pos", "clean", "_roots")

    def __init__(self, ts: int, ctx: Optional[Ctx], focus: A.Expr):
        self.ts = ts
        self.ctx = ctx
        self.focus = focus
        self.pos = None
        self.clean = False
        self._roots = None

    @staticmethod
    def start(ts: int, e: A.Expr, ctx: Optional[Ctx] = None) -> Task:
        return Task(ts, *settle(ctx, e))

    @property
    def finished(self) -> bool:
        return self.ctx is None and isinstance(self.focus, A.Value)

    @property
    def roots(self) -> frozenset:
        if self._roots is None:
            r = self.focus.locs
            if self.ctx is not None and self.ctx.locs:
                r = self.ctx.locs | r
            self._roots = r
        return self._roots

    def expr(self) -> A.Expr:
        return ctx_plug(self.ctx, self.focus)


class Fork:
    """A suspended task waiting on its two children under an active pair."""

    __slots__ = ("ts", "ctx", "left", "right", "pos", "ctx_clean", "clean")

    def __init__(self, ts: int, ctx: Optional[Ctx], left, right, ctx_clean: bool = False):
        self.ts = ts
        self.ctx = ctx
        self.left = left
        self.right = right
        self.pos = None
        self.ctx_clean = ctx_clean
        self.clean = False  # every root in the subtree already checked

    def expr(self) -> A.Expr:
        return ctx_plug(self.ctx, A.RunPar(self.left.expr(), self.right.expr()))


RunTree = Union[Task, Fork]


def run_at(run: RunTree, path) -> RunTree:
    for side in path:
        if type(run) is not Fork:
            raise InvalidPosition(f"path {tuple(path)} runs past a leaf")
        run = run.right if side else run.left
    return run


def _run_replace(run: RunTree, path, new: RunTree, same_leaves: bool) -> RunTree:
    if not path:
        return new
    if type(run) is not Fork:
        raise InvalidPosition(f"path {tuple(path)} runs past a leaf")
    flag = run.ctx_clean and same_leaves
    if path[0]:
        return Fork(run.ts, run.ctx, run.left, _run_replace(run.right, path[1:], new, same_leaves), flag)
    return Fork(run.ts, run.ctx, _run_replace(run.left, path[1:], new, same_leaves), run.right, flag)


def run_leaves(run: RunTree) -> list[int]:
    if type(run) is Task:
        return [run.ts]
    return run_leaves(run.left) + run_leaves(run.right)


def _task_tree(run: RunTree) -> TaskTree:
    if type(run) is Task:
        return Leaf(run.ts)
    return Node(run.ts, _task_tree(run.left), _task_tree(run.right))


def split(tree: TaskTree, e: A.Expr) -> RunTree:
    """Cut ``e`` along ``tree``: every node must sit on an active parallel pair."""
    if isinstance(tree, Leaf):
        return Task.start(tree.ts, e)
    try:
        d = A.decompose(e)
    except A.Stuck as err:
        raise ShapeMismatch(str(err)) from None
    if not isinstance(d, A.AtParPair):
        raise ShapeMismatch(f"task {tree.ts} is suspended but its expression has no active pair")
    return Fork(tree.ts, ctx_from_frames(d.context), split(tree.left, d.pair.left),
                split(tree.right, d.pair.right))


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


class Configuration:
    """Store, allocation map, computation graph and the running tasks.

    ``tree`` (timestamps only) and ``expr`` (the whole program) are derived
    from the running tasks on demand.
    """

    def __init__(self, store: dict, allocmap: dict, graph: CompGraph, run: RunTree,
                 fresh_loc: int = 0, fresh_ts: int = ROOT_TS + 1):
        self.store = store
        self.allocmap = allocmap
        self.graph = graph
        self.run = run
        self.fresh_loc = fresh_loc
        self.fresh_ts = fresh_ts
        self.epoch = object()  # identifies the store contents for cached head results
        self._tree = None
        self._expr = None

    @staticmethod
    def from_parts(store: dict, allocmap: dict, graph: CompGraph, tree: TaskTree, expr: A.Expr,
                   fresh_loc: Optional[int] = None, fresh_ts: Optional[int] = None) -> Configuration:
        if fresh_loc is None:
            fresh_loc = max((l.id for l in store), default=-1) + 1
        if fresh_ts is None:
            fresh_ts = max(graph.vertices() | set(leaves(tree)), default=ROOT_TS) + 1
        return Configuration(store, allocmap, graph, split(tree, expr), fresh_loc, fresh_ts)

    def copy(self) -> Configuration:
        c = Configuration(dict(self.store), dict(self.allocmap), self.graph.copy(), self.run,
                          self.fresh_loc, self.fresh_ts)
        c.epoch = self.epoch
        c._tree, c._expr = self._tree, self._expr
        return c

    def _changed(self, tree_changed: bool):
        self.epoch = object()
        self._expr = None
        if tree_changed:
            self._tree = None

    @property
    def tree(self) -> TaskTree:
        if self._tree is None:
            self._tree = _task_tree(self.run)
        return self._tree

    @property
    def expr(self) -> A.Expr:
        if self._expr is None:
            self._expr = self.run.expr()
        return self._expr

    @property
    def mode(self) -> str:
        return self.graph.mode

    @property
    def final(self) -> bool:
        return type(self.run) is Task and self.run.finished


def initial(program: A.Expr, mode: str = CYCLIC) -> Configuration:
    """Start a run: annotation nodes are erased, the root task has timestamp 0."""
    return Configuration({}, {}, CompGraph(mode), Task.start(ROOT_TS, program.erased))


# ---------------------------------------------------------------------------
# Enabled positions
# ---------------------------------------------------------------------------

STEP, FORK, JOIN, OOB, STUCK = "step", "fork", "join", "oob", "stuck"


@dataclass(slots=True, eq=False)
class Position:
    """What the task at ``path`` would do next."""

    path: tuple
    kind: str
    ts: int
    redex: Optional[A.Expr] = None
    reason: str = ""
    node: object = field(default=None, repr=False)
    _result: Optional[HeadResult] = field(default=None, repr=False)
    _epoch: object = field(default=None, repr=False)

    steppable: bool = field(init=False)

    def __post_init__(self):
        self.steppable = self.kind in (STEP, FORK, JOIN)

    @property
    def context(self) -> tuple:
        return ctx_frames(self.node.ctx)

    def head(self, cfg: Configuration) -> HeadResult:
        """The head reduction this position performs against ``cfg``'s store."""
        if self.kind != STEP:
            raise InvalidPosition(f"position {self.path} is not a head step ({self.kind})")
        res = self._result
        if res is None or (self._epoch is not cfg.epoch and type(self.redex) not in _STORE_FREE):
            res = self._result = head_step(cfg.store, self.redex, cfg.fresh_loc)
            self._epoch = cfg.epoch
        return res


# Redexes whose head result never depends on later store changes: they either
# touch no heap at all or read only blocks that are never overwritten
# (closures, pairs, injections, array lengths).
_STORE_FREE = frozenset({A.Let, A.If, A.Prim, A.Fold, A.Unfold, A.Call, A.Proj, A.Case, A.Length})


def _classify_task(cfg: Configuration, task: Task, path: tuple) -> Optional[Position]:
    r = task.focus
    if task.ctx is None and isinstance(r, A.Value):
        return None
    t = type(r)
    if t is A.RunPar:
        return Position(path, STUCK, task.ts, r, "active parallel pair under a leaf", task)
    if t is A.Var:
        return Position(path, STUCK, task.ts, r, f"free variable {r.name}", task)
    if isinstance(r, A.ANNOTATION_NODES):
        return Position(path, STUCK, task.ts, r,
                        f"annotation node {t.__name__} reached the interpreter", task)
    if t is A.Par:
        return Position(path, FORK, task.ts, r, "", task)
    try:
        res = head_step(cfg.store, r, cfg.fresh_loc)
    except OOBFault as err:
        return Position(path, OOB, task.ts, r, str(err), task)
    except StuckFault as err:
        return Position(path, STUCK, task.ts, r, str(err), task)
    return Position(path, STEP, task.ts, r, "", task, res, cfg.epoch)


def positions(cfg: Configuration) -> list[Position]:
    """Every task position with what it would do next (finished tasks are omitted)."""
    out: list[Position] = []
    _collect(cfg, cfg.run, (), out)
    return out


def _collect(cfg, run, path, out):
    if type(run) is Task:
        cached = run.pos
        # a CAS can turn stuck when its cell changes sort, so it is the one
        # redex whose classification is tied to the store contents
        if cached is None or (cached[1] is not None and cached[1] is not cfg.epoch):
            p = _classify_task(cfg, run, path)
            run.pos = (p, cfg.epoch if type(run.focus) is A.Cas else None)
        else:
            p = cached[0]
        if p is not None:
            out.append(p)
        return
    left, right = run.left, run.right
    if (type(left) is Task and type(right) is Task and left.ctx is None and right.ctx is None
            and isinstance(left.focus, A.Value) and isinstance(right.focus, A.Value)):
        if run.pos is None:
            run.pos = Position(path, JOIN, run.ts, None, "", run)
        out.append(run.pos)
        return
    _collect(cfg, left, path + (0,), out)
    _collect(cfg, right, path + (1,), out)


def enabled(cfg: Configuration) -> list[Position]:
    return [p for p in positions(cfg) if p.steppable]


# ---------------------------------------------------------------------------
# Scheduler steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    index: int
    path: tuple
    rule: str
    ts: int
    allocs: tuple = ()
    new_ts: tuple = ()

    def to_json(self) -> str:
        return json.dumps({"step": self.index, "path": list(self.path), "rule": self.rule,
                           "ts": self.ts, "allocs": list(self.allocs), "new_ts": list(self.new_ts)})

    @staticmethod
    def from_json(line: str) -> StepRecord:
        d = json.loads(line)
        return StepRecord(d["step"], tuple(d["path"]), d["rule"], d["ts"],
                          tuple(d["allocs"]), tuple(d["new_ts"]))


def apply(cfg: Configuration, pos: Position, index: int = 0) -> StepRecord:
    """Commit ``pos`` to ``cfg`` in place."""
    if not pos.steppable:
        raise InvalidPosition(f"position {pos.path} is not steppable ({pos.kind}: {pos.reason})")
    if run_at(cfg.run, pos.path) is not pos.node:
        raise InvalidPosition(f"stale position {pos.path}: the task has moved on")
    if pos.kind == STEP:
        return _apply_head(cfg, pos, index)
    if pos.kind == FORK:
        return _apply_fork(cfg, pos, index)
    return _apply_join(cfg, pos, index)


def _apply_head(cfg, pos, index):
    res = pos.head(cfg)
    allocs = []
    for loc, blk in res.allocs:
        cfg.store[loc] = blk
        cfg.allocmap[loc] = pos.ts
        cfg.fresh_loc += 1
        allocs.append(loc.id)
    for loc, blk in res.writes:
        cfg.store[loc] = blk
    task = pos.node
    cfg.run = _run_replace(cfg.run, pos.path, Task.start(task.ts, res.expr, task.ctx), True)
    cfg._changed(False)
    return StepRecord(index, pos.path, res.rule, pos.ts, tuple(allocs))


def _apply_fork(cfg, pos, index):
    t = pos.ts
    t1, t2 = cfg.fresh_ts, cfg.fresh_ts + 1
    cfg.fresh_ts += 2
    cfg.graph.add(t, t1)
    cfg.graph.add(t, t2)
    par = pos.redex
    unit = (A.UNIT_V,)
    node = Fork(t, pos.node.ctx, Task.start(t1, A.Call(par.left, (), unit)),
                Task.start(t2, A.Call(par.right, (), unit)))
    cfg.run = _run_replace(cfg.run, pos.path, node, False)
    cfg._changed(True)
    return StepRecord(index, pos.path, "SchedFork", t, (), (t1, t2))


def _apply_join(cfg, pos, index):
    node = pos.node
    t1, t2 = node.left.ts, node.right.ts
    new_ts: tuple = ()
    if cfg.graph.mode == CYCLIC:
        t = node.ts
    else:
        t = cfg.fresh_ts
        cfg.fresh_ts += 1
        new_ts = (t,)
    cfg.graph.add(t1, t)
    cfg.graph.add(t2, t)
    loc = Loc(cfg.fresh_loc)
    cfg.fresh_loc += 1
    cfg.store[loc] = PairBlock(node.left.focus, node.right.focus)
    cfg.allocmap[loc] = t
    cfg.run = _run_replace(cfg.run, pos.path, Task.start(t, loc, node.ctx), False)
    cfg._changed(True)
    return StepRecord(index, pos.path, "SchedJoin", t, (loc.id,), new_ts)


def sched_step(cfg: Configuration, path) -> Configuration:
    """Functional step at ``path``; raises InvalidPosition if nothing can step there."""
    path = tuple(path)
    for p in enabled(cfg):
        if p.path == path:
            new = cfg.copy()
            apply(new, p)
            return new
    raise InvalidPosition(f"no enabled step at {path}")


def load(text: str, mode: str = CYCLIC, file: str = "<input>") -> Configuration:
    from typedis.surface import elaborate_program, parse_program

    return initial(elaborate_program(parse_program(text, file)), mode)


def flatten_value(store: dict, v: Value):
    """Read a heap value back into nested Python data (for oracles and printing)."""
    match v:
        case A.Unit():
            return ()
        case A.Bool(b) | A.Int(b):
            return b
        case A.Folded(inner):
            return flatten_value(store, inner)
        case Loc():
            blk = store[v]
            match blk:
                case ArrayBlock(cells):
                    return [flatten_value(store, c) for c in cells]
                case PairBlock(l, r):
                    return (flatten_value(store, l), flatten_value(store, r))
                case InjBlock(i, p):
                    return (f"inj{i}", flatten_value(store, p))
                case ClosureBlock():
                    return "<closure>"
    raise TypeError(f"not a value: {v!r}")
