"""Terms of the fork-join language: expressions, values, heap blocks.

Expressions are immutable and structurally shared between interpreter
steps, so the derived sets (free variables, syntactic locations) are cached
on each node the first time they are asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Mapping, Optional, Union

from typedis.types import Kind, Type


class cached_property:
    """Compute once per instance and store in the instance dict (no locking)."""

    def __init__(self, fn):
        self.fn = fn
        self.name = fn.__name__

    def __set_name__(self, owner, name):
        self.name = name

    def __get__(self, obj, cls=None):
        if obj is None:
            return self
        v = obj.__dict__[self.name] = self.fn(obj)
        return v


@dataclass(frozen=True)
class Span:
    file: str
    line: int
    col: int

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


# Expression nodes are immutable by convention.  They are not frozen
# dataclasses because the interpreter builds several per step and frozen
# construction is about three times slower.
_node = dataclass(unsafe_hash=True)

PRIMS = ("+", "-", "*", "/", "mod", "==", "<", "<=", ">", ">=", "||", "&&")


@_node
class Expr:
    span: Optional[Span] = field(default=None, kw_only=True, compare=False, repr=False)

    # Number of leading children that are evaluated (left to right) before the
    # node itself becomes a redex; None means all of them.
    n_eval: ClassVar[Optional[int]] = None

    def children(self) -> tuple[Expr, ...]:
        return ()

    def rebuild(self, kids: tuple[Expr, ...]) -> Expr:
        return self

    @cached_property
    def locs(self) -> frozenset:
        out = frozenset()
        for k in self.children():
            if k.locs:
                out = out | k.locs
        return out

    @cached_property
    def free_vars(self) -> frozenset:
        out = frozenset()
        for k in self.children():
            out = out | k.free_vars
        return out

    @cached_property
    def erased(self) -> Expr:
        """This expression without annotation nodes (see ``erase``)."""
        return erase(self)

    def __str__(self):
        from typedis.surface import print_expr

        return print_expr(self)


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@_node
class Value(Expr):
    pass


@_node
class Unit(Value):
    pass


@_node
class Bool(Value):
    value: bool


@_node
class Int(Value):
    value: int


@dataclass(eq=True)
class Loc(Value):
    id: int

    def __hash__(self):
        return self.id

    @cached_property
    def locs(self) -> frozenset:
        return frozenset([self])


@_node
class Folded(Value):
    value: Value

    def children(self):
        return (self.value,)


UNIT_V = Unit()
TRUE = Bool(True)
FALSE = Bool(False)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@_node
class Var(Expr):
    name: str

    @cached_property
    def free_vars(self):
        return frozenset([self.name])


@_node
class Let(Expr):
    name: str
    bound: Expr
    body: Expr
    n_eval: ClassVar[Optional[int]] = 1

    def children(self):
        return (self.bound, self.body)

    def rebuild(self, kids):
        return Let(self.name, kids[0], kids[1], span=self.span)

    @cached_property
    def free_vars(self):
        return self.bound.free_vars | (self.body.free_vars - {self.name})


@_node
class If(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    n_eval: ClassVar[Optional[int]] = 1

    def children(self):
        return (self.cond, self.then, self.orelse)

    def rebuild(self, kids):
        return If(*kids, span=self.span)


@_node
class Prim(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def rebuild(self, kids):
        return Prim(self.op, *kids, span=self.span)


@dataclass(frozen=True)
class AbsAnnot:
    """Signature of an abstraction: what T-Abs needs to type its body."""

    tsparams: tuple[str, ...]
    constraints: frozenset  # frozenset[tuple[str, str]]
    param_types: tuple[Type, ...]
    run: str
    ret: Type


@_node
class Lam(Expr):
    self_name: str
    params: tuple[str, ...]
    annot: AbsAnnot
    body: Expr
    n_eval: ClassVar[Optional[int]] = 0

    def children(self):
        return (self.body,)

    def rebuild(self, kids):
        return Lam(self.self_name, self.params, self.annot, kids[0], span=self.span)

    @cached_property
    def free_vars(self):
        return self.body.free_vars - {self.self_name, *self.params}


@_node
class Call(Expr):
    fn: Expr
    tsargs: tuple[str, ...]
    args: tuple[Expr, ...]

    def children(self):
        return (self.fn, *self.args)

    def rebuild(self, kids):
        return Call(kids[0], self.tsargs, tuple(kids[1:]), span=self.span)


@_node
class Pair(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def rebuild(self, kids):
        return Pair(*kids, span=self.span)


@_node
class Proj(Expr):
    index: int  # 1 or 2
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Proj(self.index, kids[0], span=self.span)


@_node
class Inj(Expr):
    index: int  # 1 or 2
    annot: Type
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Inj(self.index, self.annot, kids[0], span=self.span)


@_node
class Case(Expr):
    scrut: Expr
    x1: str
    e1: Expr
    x2: str
    e2: Expr
    n_eval: ClassVar[Optional[int]] = 1

    def children(self):
        return (self.scrut, self.e1, self.e2)

    def rebuild(self, kids):
        return Case(kids[0], self.x1, kids[1], self.x2, kids[2], span=self.span)

    @cached_property
    def free_vars(self):
        return (self.scrut.free_vars | (self.e1.free_vars - {self.x1})
                | (self.e2.free_vars - {self.x2}))


@_node
class Alloc(Expr):
    size: Expr
    init: Expr

    def children(self):
        return (self.size, self.init)

    def rebuild(self, kids):
        return Alloc(*kids, span=self.span)


@_node
class Load(Expr):
    arr: Expr
    index: Expr

    def children(self):
        return (self.arr, self.index)

    def rebuild(self, kids):
        return Load(*kids, span=self.span)


@_node
class Store(Expr):
    arr: Expr
    index: Expr
    value: Expr

    def children(self):
        return (self.arr, self.index, self.value)

    def rebuild(self, kids):
        return Store(*kids, span=self.span)


@_node
class Length(Expr):
    arr: Expr

    def children(self):
        return (self.arr,)

    def rebuild(self, kids):
        return Length(kids[0], span=self.span)


@_node
class Cas(Expr):
    arr: Expr
    index: Expr
    old: Expr
    new: Expr

    def children(self):
        return (self.arr, self.index, self.old, self.new)

    def rebuild(self, kids):
        return Cas(*kids, span=self.span)


@_node
class Fold(Expr):
    annot: Type
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Fold(self.annot, kids[0], span=self.span)


@_node
class Unfold(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Unfold(kids[0], span=self.span)


@_node
class Par(Expr):
    annot1: Type
    annot2: Type
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def rebuild(self, kids):
        return Par(self.annot1, self.annot2, *kids, span=self.span)


@_node
class RunPar(Expr):
    """Active parallel pair; only ever produced by a fork."""

    left: Expr
    right: Expr
    n_eval: ClassVar[Optional[int]] = 0

    def children(self):
        return (self.left, self.right)

    def rebuild(self, kids):
        return RunPar(*kids, span=self.span)


# Annotation nodes. They steer rule selection in the checker and are erased
# before execution.


@_node
class Sub(Expr):
    target: Type
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Sub(self.target, kids[0], span=self.span)


@_node
class GetRoot(Expr):
    var: str
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return GetRoot(self.var, kids[0], span=self.span)

    @cached_property
    def free_vars(self):
        return self.arg.free_vars | {self.var}


@_node
class TAbs(Expr):
    tvar: str
    kind: Kind
    arg: Expr

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return TAbs(self.tvar, self.kind, kids[0], span=self.span)


@_node
class TAppE(Expr):
    arg: Expr
    type: Type

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return TAppE(kids[0], self.type, span=self.span)


ANNOTATION_NODES = (Sub, GetRoot, TAbs, TAppE)


# ---------------------------------------------------------------------------
# Heap blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrayBlock:
    cells: tuple[Value, ...]


@dataclass(frozen=True)
class PairBlock:
    left: Value
    right: Value


@dataclass(frozen=True)
class InjBlock:
    index: int
    payload: Value


@dataclass(frozen=True)
class ClosureBlock:
    self_name: str
    params: tuple[str, ...]
    annot: AbsAnnot
    body: Expr


Block = Union[ArrayBlock, PairBlock, InjBlock, ClosureBlock]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def is_value(e: Expr) -> bool:
    return isinstance(e, Value)


def locs(e: Expr) -> frozenset:
    return e.locs


def subst(e: Expr, bindings: Mapping[str, Value]) -> Expr:
    """Replace free variables by closed values; binders shadow."""
    if not bindings or e.free_vars.isdisjoint(bindings):
        return e
    return _subst(e, bindings)


def _without(bindings, *names):
    if not any(n in bindings for n in names):
        return bindings
    return {k: v for k, v in bindings.items() if k not in names}


def _sub_in(e: Expr, b) -> Expr:
    return e if e.free_vars.isdisjoint(b) else _subst(e, b)


def _subst(e: Expr, b: Mapping[str, Value]) -> Expr:
    # precondition: some free variable of e is bound in b
    t = type(e)
    if t is Var:
        return b[e.name]
    if t is Let:
        inner = _without(b, e.name)
        return Let(e.name, _sub_in(e.bound, b), _sub_in(e.body, inner) if inner else e.body,
                   span=e.span)
    if t is Case:
        b1, b2 = _without(b, e.x1), _without(b, e.x2)
        return Case(_sub_in(e.scrut, b), e.x1, _sub_in(e.e1, b1) if b1 else e.e1,
                    e.x2, _sub_in(e.e2, b2) if b2 else e.e2, span=e.span)
    if t is Lam:
        return Lam(e.self_name, e.params, e.annot,
                   _subst(e.body, _without(b, e.self_name, *e.params)), span=e.span)
    if t is GetRoot:
        # the annotation names a variable; once it is gone only the body matters
        return _sub_in(e.arg, b) if e.var in b else GetRoot(e.var, _sub_in(e.arg, b), span=e.span)
    return e.rebuild(tuple([k if k.free_vars.isdisjoint(b) else _subst(k, b)
                            for k in e.children()]))


# ---------------------------------------------------------------------------
# Evaluation contexts
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class Frame:
    """One layer of an evaluation context: ``node`` with a hole at child ``slot``."""

    node: Expr
    slot: int
    _locs: Optional[frozenset] = field(default=None, compare=False, repr=False)

    def plug(self, e: Expr) -> Expr:
        kids = list(self.node.children())
        kids[self.slot] = e
        return self.node.rebuild(tuple(kids))

    @property
    def kind(self) -> str:
        return f"{type(self.node).__name__.lower()}-hole{self.slot}"

    @property
    def locs(self) -> frozenset:
        if self._locs is None:
            out = frozenset()
            for i, k in enumerate(self.node.children()):
                if i != self.slot:
                    out |= k.locs
            self._locs = out
        return self._locs


class Stuck(Exception):
    pass


@dataclass(slots=True)
class AtValue:
    pass


@dataclass(slots=True)
class AtRedex:
    context: tuple[Frame, ...]
    redex: Expr


@dataclass(slots=True)
class AtParPair:
    context: tuple[Frame, ...]
    pair: RunPar


def decompose(e: Expr):
    """Split ``e`` into ``K[r]`` with r a head redex or an active parallel pair."""
    if isinstance(e, Value):
        return AtValue()
    frames = []
    while True:
        if isinstance(e, RunPar):
            return AtParPair(tuple(frames), e)
        if isinstance(e, ANNOTATION_NODES):
            raise Stuck(f"annotation node {type(e).__name__} reached the interpreter")
        if isinstance(e, Var):
            raise Stuck(f"free variable {e.name}")
        kids = e.children()
        n = len(kids) if e.n_eval is None else e.n_eval
        for i in range(n):
            if not isinstance(kids[i], Value):
                frames.append(Frame(e, i))
                e = kids[i]
                break
        else:
            return AtRedex(tuple(frames), e)


def plug(context, e: Expr) -> Expr:
    for frame in reversed(context):
        e = frame.plug(e)
    return e


def context_locs(context) -> frozenset:
    out = frozenset()
    for frame in context:
        out |= frame.locs
    return out


def erase(e: Expr) -> Expr:
    """Drop the checker-only annotation nodes."""
    match e:
        case Sub(_, arg) | GetRoot(_, arg) | TAbs(_, _, arg) | TAppE(arg, _):
            return erase(arg)
    kids = e.children()
    if not kids:
        return e
    new = tuple(erase(k) for k in kids)
    if all(a is b for a, b in zip(new, kids)):
        return e
    return e.rebuild(new)
