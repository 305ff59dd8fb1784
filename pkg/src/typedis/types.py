"""Static types, kinds, logical graphs and the auxiliary judgments on them.

Types come in two syntactic classes: ``Type`` (the rho grammar) and
``Boxed`` (heap-allocated shapes, always stamped by ``At`` or ``Rec``).
All substitutions here are capture-avoiding, so callers never need to
pre-rename binders.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Union

# A logical graph is a finite set of precedence edges between timestamp vars.
LogicalGraph = frozenset  # frozenset[tuple[str, str]]
EMPTY_GRAPH: frozenset = frozenset()


@dataclass(frozen=True)
class Kind:
    level: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("kind level must be non-negative")

    def succ(self) -> Kind:
        return Kind(self.level + 1)

    def __str__(self):
        return "*" + "+" * self.level


STAR = Kind(0)


class Type:
    def __str__(self):
        from typedis.surface import print_type

        return print_type(self)


class Boxed:
    def __str__(self):
        from typedis.surface import print_type

        return print_type(self)


@dataclass(frozen=True)
class Unboxed(Type):
    name: str  # "unit" | "bool" | "int"


UNIT = Unboxed("unit")
BOOL = Unboxed("bool")
INT = Unboxed("int")


@dataclass(frozen=True)
class TVar(Type):
    name: str


@dataclass(frozen=True)
class TLam(Type):
    """Type abstracted over one timestamp: ``\\d. body``."""

    ts: str
    body: Type


@dataclass(frozen=True)
class TApp(Type):
    fn: Type
    arg: str


@dataclass(frozen=True)
class Forall(Type):
    tvar: str
    kind: Kind
    body: Type


@dataclass(frozen=True)
class Rec(Type):
    tvar: str
    body: Boxed
    stamp: str


@dataclass(frozen=True)
class At(Type):
    body: Boxed
    stamp: str


@dataclass(frozen=True)
class Array(Boxed):
    elem: Type


@dataclass(frozen=True)
class Prod(Boxed):
    left: Type
    right: Type


@dataclass(frozen=True)
class Sum(Boxed):
    left: Type
    right: Type


@dataclass(frozen=True)
class Arrow(Boxed):
    tsparams: tuple[str, ...]
    constraints: frozenset  # frozenset[tuple[str, str]]
    args: tuple[Type, ...]
    run: str
    ret: Type


AnyType = Union[Type, Boxed]


class KindingError(Exception):
    def __init__(self, rule: str, message: str):
        super().__init__(message)
        self.rule = rule
        self.message = message


@dataclass
class TypeEnv:
    """Term variables to types, type variables to kinds."""

    terms: dict[str, Type] = field(default_factory=dict)
    tvars: dict[str, Kind] = field(default_factory=dict)

    def bind(self, name: str, ty: Type) -> TypeEnv:
        terms = dict(self.terms)
        terms[name] = ty
        return TypeEnv(terms, self.tvars)

    def bind_many(self, pairs: Iterable[tuple[str, Type]]) -> TypeEnv:
        terms = dict(self.terms)
        terms.update(pairs)
        return TypeEnv(terms, self.tvars)

    def bind_tvar(self, name: str, kind: Kind) -> TypeEnv:
        tvars = dict(self.tvars)
        tvars[name] = kind
        return TypeEnv(self.terms, tvars)


# ---------------------------------------------------------------------------
# Free variables and fresh names
# ---------------------------------------------------------------------------

_fresh_counter = itertools.count(1)


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    root = base.split("'")[0] or "v"
    while True:
        name = f"{root}'{next(_fresh_counter)}"
        if name not in avoid:
            return name


def free_tvars(t: AnyType) -> frozenset[str]:
    match t:
        case Unboxed():
            return frozenset()
        case TVar(name):
            return frozenset([name])
        case TLam(_, body):
            return free_tvars(body)
        case TApp(fn, _):
            return free_tvars(fn)
        case Forall(a, _, body) | Rec(a, body, _):
            return free_tvars(body) - {a}
        case At(body, _):
            return free_tvars(body)
        case Array(elem):
            return free_tvars(elem)
        case Prod(l, r) | Sum(l, r):
            return free_tvars(l) | free_tvars(r)
        case Arrow(_, _, args, _, ret):
            out = free_tvars(ret)
            for a in args:
                out |= free_tvars(a)
            return out
    raise TypeError(f"not a type: {t!r}")


def free_ts(t: AnyType) -> frozenset[str]:
    match t:
        case Unboxed() | TVar():
            return frozenset()
        case TLam(d, body):
            return free_ts(body) - {d}
        case TApp(fn, d):
            return free_ts(fn) | {d}
        case Forall(_, _, body):
            return free_ts(body)
        case Rec(_, body, d) | At(body, d):
            return free_ts(body) | {d}
        case Array(elem):
            return free_ts(elem)
        case Prod(l, r) | Sum(l, r):
            return free_ts(l) | free_ts(r)
        case Arrow(params, cons, args, run, ret):
            inner = free_ts(ret) | {run}
            for a in args:
                inner |= free_ts(a)
            for x, y in cons:
                inner |= {x, y}
            return inner - set(params)
    raise TypeError(f"not a type: {t!r}")


def graph_ts(g: Iterable[tuple[str, str]]) -> frozenset[str]:
    return frozenset(x for edge in g for x in edge)


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def _rn(mapping: Mapping[str, str], d: str) -> str:
    return mapping.get(d, d)


def tsubst(t: AnyType, mapping: Mapping[str, str]) -> AnyType:
    """Simultaneous timestamp substitution."""
    if not mapping:
        return t
    match t:
        case Unboxed() | TVar():
            return t
        case TLam(d, body):
            inner = {k: v for k, v in mapping.items() if k != d}
            if not inner:
                return t
            if d in inner.values():
                d2 = fresh_name(d, set(inner.values()) | free_ts(body) | set(inner))
                inner[d] = d2
                return TLam(d2, tsubst(body, inner))
            return TLam(d, tsubst(body, inner))
        case TApp(fn, d):
            return TApp(tsubst(fn, mapping), _rn(mapping, d))
        case Forall(a, k, body):
            return Forall(a, k, tsubst(body, mapping))
        case Rec(a, body, d):
            return Rec(a, tsubst(body, mapping), _rn(mapping, d))
        case At(body, d):
            return At(tsubst(body, mapping), _rn(mapping, d))
        case Array(elem):
            return Array(tsubst(elem, mapping))
        case Prod(l, r):
            return Prod(tsubst(l, mapping), tsubst(r, mapping))
        case Sum(l, r):
            return Sum(tsubst(l, mapping), tsubst(r, mapping))
        case Arrow(params, cons, args, run, ret):
            inner = {k: v for k, v in mapping.items() if k not in params}
            if not inner:
                return t
            captured = set(params) & set(inner.values())
            if captured:
                avoid = set(inner.values()) | set(inner) | free_ts(t) | set(params)
                ren = {}
                for p in params:
                    if p in captured:
                        ren[p] = fresh_name(p, avoid)
                        avoid.add(ren[p])
                params = tuple(ren.get(p, p) for p in params)
                inner = {**inner, **ren}
            return Arrow(
                params,
                frozenset((_rn(inner, x), _rn(inner, y)) for x, y in cons),
                tuple(tsubst(a, inner) for a in args),
                _rn(inner, run),
                tsubst(ret, inner),
            )
    raise TypeError(f"not a type: {t!r}")


def subst_graph(g: Iterable[tuple[str, str]], mapping: Mapping[str, str]) -> frozenset:
    return frozenset((_rn(mapping, x), _rn(mapping, y)) for x, y in g)


def subst_tvar(t: AnyType, name: str, repl: Type) -> AnyType:
    """Capture-avoiding ``[repl/name] t`` for a type variable."""
    fv_repl = free_tvars(repl)
    fts_repl = free_ts(repl)

    def go(t):
        match t:
            case Unboxed():
                return t
            case TVar(n):
                return repl if n == name else t
            case TLam(d, body):
                if d in fts_repl:
                    d2 = fresh_name(d, fts_repl | free_ts(body))
                    body = tsubst(body, {d: d2})
                    d = d2
                return TLam(d, go(body))
            case TApp(fn, d):
                return TApp(go(fn), d)
            case Forall(a, _, _) if a == name:
                return t
            case Rec(a, _, _) if a == name:
                return t
            case Forall(a, k, body):
                if a in fv_repl:
                    a2 = fresh_name(a, fv_repl | free_tvars(body))
                    body = subst_tvar(body, a, TVar(a2))
                    a = a2
                return Forall(a, k, go(body))
            case Rec(a, body, d):
                if a in fv_repl:
                    a2 = fresh_name(a, fv_repl | free_tvars(body))
                    body = subst_tvar(body, a, TVar(a2))
                    a = a2
                return Rec(a, go(body), d)
            case At(body, d):
                return At(go(body), d)
            case Array(elem):
                return Array(go(elem))
            case Prod(l, r):
                return Prod(go(l), go(r))
            case Sum(l, r):
                return Sum(go(l), go(r))
            case Arrow(params, cons, args, run, ret):
                captured = set(params) & fts_repl
                if captured:
                    avoid = fts_repl | free_ts(t) | set(params)
                    ren = {}
                    for p in params:
                        if p in captured:
                            ren[p] = fresh_name(p, avoid)
                            avoid.add(ren[p])
                    t = Arrow(
                        tuple(ren.get(p, p) for p in params),
                        subst_graph(cons, ren),
                        tuple(tsubst(a, ren) for a in args),
                        _rn(ren, run),
                        tsubst(ret, ren),
                    )
                    params, cons, args, run, ret = (
                        t.tsparams, t.constraints, t.args, t.run, t.ret)
                return Arrow(params, cons, tuple(go(a) for a in args), run, go(ret))
        raise TypeError(f"not a type: {t!r}")

    if name not in free_tvars(t):
        return t
    return go(t)


def unroll(rec: Rec) -> At:
    """``(sigma[rec/alpha]) @ stamp`` for the fold/unfold rules."""
    return At(subst_tvar(rec.body, rec.tvar, rec), rec.stamp)


# ---------------------------------------------------------------------------
# Beta normalization
# ---------------------------------------------------------------------------


def beta_normalize(t: AnyType) -> AnyType:
    match t:
        case Unboxed() | TVar():
            return t
        case TLam(d, body):
            return TLam(d, beta_normalize(body))
        case TApp(fn, d):
            fn = beta_normalize(fn)
            if isinstance(fn, TLam):
                return beta_normalize(tsubst(fn.body, {fn.ts: d}))
            return TApp(fn, d)
        case Forall(a, k, body):
            return Forall(a, k, beta_normalize(body))
        case Rec(a, body, d):
            return Rec(a, beta_normalize(body), d)
        case At(body, d):
            return At(beta_normalize(body), d)
        case Array(elem):
            return Array(beta_normalize(elem))
        case Prod(l, r):
            return Prod(beta_normalize(l), beta_normalize(r))
        case Sum(l, r):
            return Sum(beta_normalize(l), beta_normalize(r))
        case Arrow(params, cons, args, run, ret):
            return Arrow(params, cons, tuple(beta_normalize(a) for a in args),
                         run, beta_normalize(ret))
    raise TypeError(f"not a type: {t!r}")


# ---------------------------------------------------------------------------
# Kinding
# ---------------------------------------------------------------------------


def kind_of(env: TypeEnv | Mapping[str, Kind], t: Type) -> Kind:
    tvars = env.tvars if isinstance(env, TypeEnv) else env
    return _kind(dict(tvars), t)


def _expect_star(tvars, t, rule):
    k = _kind(tvars, t)
    if k != STAR:
        raise KindingError(rule, f"expected kind *, found {k} for {t}")


def _kind(tvars: dict, t: AnyType) -> Kind:
    match t:
        case Unboxed():
            return STAR
        case TVar(name):
            if name not in tvars:
                raise KindingError("K-Var", f"unbound type variable {name}")
            return tvars[name]
        case TLam(_, body):
            return _kind(tvars, body).succ()
        case TApp(fn, _):
            k = _kind(tvars, fn)
            if k.level == 0:
                raise KindingError("K-App", f"type {fn} of kind * applied to a timestamp")
            return Kind(k.level - 1)
        case Forall(a, k, body):
            _expect_star({**tvars, a: k}, body, "K-TAbs")
            return STAR
        case Rec(a, body, _):
            _expect_star({**tvars, a: STAR}, body, "K-Rec")
            return STAR
        case At(body, _):
            _kind(tvars, body)
            return STAR
        case Array(elem):
            _expect_star(tvars, elem, "K-Array")
            return STAR
        case Prod(l, r):
            _expect_star(tvars, l, "K-Pair")
            _expect_star(tvars, r, "K-Pair")
            return STAR
        case Sum(l, r):
            _expect_star(tvars, l, "K-Sum")
            _expect_star(tvars, r, "K-Sum")
            return STAR
        case Arrow(_, _, args, _, ret):
            for a in args:
                _expect_star(tvars, a, "K-Arrow")
            _expect_star(tvars, ret, "K-Arrow")
            return STAR
    raise TypeError(f"not a type: {t!r}")


# ---------------------------------------------------------------------------
# Reachability on logical graphs
# ---------------------------------------------------------------------------


@lru_cache(maxsize=65536)
def _reach_from(graph: frozenset, start: str) -> frozenset:
    succ: dict[str, list[str]] = {}
    for x, y in graph:
        succ.setdefault(x, []).append(y)
    seen = {start}
    todo = [start]
    while todo:
        for y in succ.get(todo.pop(), ()):
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return frozenset(seen)


def reachable(graph: Iterable[tuple[str, str]], d1: str, d2: str) -> bool:
    if d1 == d2:
        return True
    return d2 in _reach_from(frozenset(graph), d1)


def graph_subsumes(graph: Iterable[tuple[str, str]], other: Iterable[tuple[str, str]]) -> bool:
    graph = frozenset(graph)
    return all(reachable(graph, x, y) for x, y in other)


# ---------------------------------------------------------------------------
# The valid-variable judgment
# ---------------------------------------------------------------------------


def valid_variable(graph, alpha: str, d1: str, d2: str, t: AnyType) -> bool:
    match t:
        case TVar(name):
            return name != alpha or reachable(graph, d1, d2)
        case Unboxed():
            return True
        case At(body, d):
            return valid_variable(graph, alpha, d1, d, body)
        case Forall(a, _, body):
            return a == alpha or valid_variable(graph, alpha, d1, d2, body)
        case Prod(l, r) | Sum(l, r):
            return (valid_variable(graph, alpha, d1, d2, l)
                    and valid_variable(graph, alpha, d1, d2, r))
        case Rec(a, body, _):
            # alpha may only occur as the recursion variable itself
            return a == alpha or alpha not in free_tvars(body)
        case Array(elem):
            return alpha not in free_tvars(elem)
        case Arrow(_, _, args, _, ret):
            return all(alpha not in free_tvars(a) for a in (*args, ret))
    return False


# ---------------------------------------------------------------------------
# Alpha equivalence
# ---------------------------------------------------------------------------


def alpha_eq(t1: AnyType, t2: AnyType) -> bool:
    return _aeq(beta_normalize(t1), beta_normalize(t2), {}, {}, {}, {}, [0])


def _same(x, y, env1, env2):
    b1, b2 = env1.get(x), env2.get(y)
    if b1 is None and b2 is None:
        return x == y
    return b1 == b2


def _aeq(t1, t2, ts1, ts2, ty1, ty2, depth) -> bool:
    def bind(env, name):
        env = dict(env)
        env[name] = depth[0]
        return env

    match t1, t2:
        case Unboxed(a), Unboxed(b):
            return a == b
        case TVar(a), TVar(b):
            return _same(a, b, ty1, ty2)
        case TLam(a, b1), TLam(b, b2):
            depth[0] += 1
            return _aeq(b1, b2, bind(ts1, a), bind(ts2, b), ty1, ty2, depth)
        case TApp(f1, a), TApp(f2, b):
            return _same(a, b, ts1, ts2) and _aeq(f1, f2, ts1, ts2, ty1, ty2, depth)
        case Forall(a, k1, b1), Forall(b, k2, b2):
            if k1 != k2:
                return False
            depth[0] += 1
            return _aeq(b1, b2, ts1, ts2, bind(ty1, a), bind(ty2, b), depth)
        case Rec(a, b1, d1), Rec(b, b2, d2):
            if not _same(d1, d2, ts1, ts2):
                return False
            depth[0] += 1
            return _aeq(b1, b2, ts1, ts2, bind(ty1, a), bind(ty2, b), depth)
        case At(b1, d1), At(b2, d2):
            return _same(d1, d2, ts1, ts2) and _aeq(b1, b2, ts1, ts2, ty1, ty2, depth)
        case Array(e1), Array(e2):
            return _aeq(e1, e2, ts1, ts2, ty1, ty2, depth)
        case (Prod(l1, r1), Prod(l2, r2)) | (Sum(l1, r1), Sum(l2, r2)):
            return (_aeq(l1, l2, ts1, ts2, ty1, ty2, depth)
                    and _aeq(r1, r2, ts1, ts2, ty1, ty2, depth))
        case Arrow(p1, c1, a1, run1, r1), Arrow(p2, c2, a2, run2, r2):
            if len(p1) != len(p2) or len(a1) != len(a2):
                return False
            for x, y in zip(p1, p2):
                depth[0] += 1
                ts1 = bind(ts1, x)
                ts2 = bind(ts2, y)
            if not _same(run1, run2, ts1, ts2):
                return False

            def key(env, d):
                b = env.get(d)
                return ("b", b) if b is not None else ("f", d)

            e1 = {(key(ts1, x), key(ts1, y)) for x, y in c1}
            e2 = {(key(ts2, x), key(ts2, y)) for x, y in c2}
            if e1 != e2:
                return False
            return all(_aeq(x, y, ts1, ts2, ty1, ty2, depth) for x, y in zip(a1, a2)) and \
                _aeq(r1, r2, ts1, ts2, ty1, ty2, depth)
    return False
