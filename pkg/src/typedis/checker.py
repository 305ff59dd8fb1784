"""The typing judgment ``cur; graph; env |- e : rho``, subtiming, and veryPure.

Rule selection is driven entirely by the expression's head constructor and
its annotations, so checking never backtracks.  Types are kept in beta-normal
form throughout; every comparison is up to alpha-equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from typedis import ast as A
from typedis import types as T
from typedis.ast import Span
from typedis.surface import TOP_TS, Diagnostic, SourceProgram, elaborate_program


class TypeCheckError(Exception):
    def __init__(self, rule: str, span: Optional[Span], detail: str,
                 expected=None, found=None):
        self.rule = rule
        self.span = span
        self.detail = detail
        self.expected = expected
        self.found = found
        super().__init__(str(self))

    def __str__(self):
        where = f" {self.span}" if self.span else ""
        msg = f"[{self.rule}]{where} {self.detail}"
        if self.expected is not None:
            msg += f" expected {self.expected}"
        if self.found is not None:
            msg += f" found {self.found}"
        return msg

    def diagnostic(self) -> Diagnostic:
        text = self.detail
        if self.expected is not None:
            text += f" expected {self.expected}"
        if self.found is not None:
            text += f" found {self.found}"
        return Diagnostic("error", self.span or Span("<unknown>", 0, 0), text, self.rule)


@dataclass(frozen=True)
class CheckCtx:
    current: str = TOP_TS
    graph: frozenset = frozenset()
    env: T.TypeEnv = field(default_factory=T.TypeEnv)

    def at(self, current: str, extra=()) -> CheckCtx:
        return CheckCtx(current, self.graph | frozenset(extra), self.env)

    def with_edges(self, edges) -> CheckCtx:
        return CheckCtx(self.current, self.graph | frozenset(edges), self.env)

    def bind(self, name: str, ty) -> CheckCtx:
        return CheckCtx(self.current, self.graph, self.env.bind(name, ty))


# ---------------------------------------------------------------------------
# veryPure
# ---------------------------------------------------------------------------


def very_pure(e: A.Expr) -> bool:
    match e:
        case A.Value() | A.Var() | A.Lam():
            return True
        case A.Sub(_, arg) | A.GetRoot(_, arg) | A.TAbs(_, _, arg) | A.TAppE(arg, _):
            return very_pure(arg)
        case A.Prim() | A.Let() | A.Pair() | A.Fold() | A.Unfold() | A.If() | A.Inj():
            return all(very_pure(k) for k in e.children())
    return False


# ---------------------------------------------------------------------------
# Subtiming
# ---------------------------------------------------------------------------


def _norm(t):
    return T.beta_normalize(t)


def subtime(graph, current: str, t1, t2) -> bool:
    """Decide ``graph; current |- t1 <: t2`` (both sides normalized first)."""
    return _sub(frozenset(graph), current, _norm(t1), _norm(t2))


def _stamps_ok(g, d, d1, d2) -> bool:
    return T.reachable(g, d1, d2) and (d1 == d2 or T.reachable(g, d2, d))


def _common_tvar(a1, b1, a2, b2):
    avoid = T.free_tvars(b1) | T.free_tvars(b2) | {a1, a2}
    c = T.fresh_name(a1, avoid)
    return c, T.subst_tvar(b1, a1, T.TVar(c)), T.subst_tvar(b2, a2, T.TVar(c))


def _sub(g, d, t1, t2) -> bool:
    if T.alpha_eq(t1, t2):
        return True
    match t1, t2:
        case T.Forall(a1, k1, b1), T.Forall(a2, k2, b2):
            if k1 != k2:
                return False
            _, b1, b2 = _common_tvar(a1, b1, a2, b2)
            return _sub(g, d, b1, b2)
        case T.At(s1, d1), T.At(s2, d2):
            return _stamps_ok(g, d, d1, d2) and _sub_boxed(g, d2, s1, s2)
        case T.Rec(a1, s1, d1), T.Rec(a2, s2, d2):
            if not _stamps_ok(g, d, d1, d2):
                return False
            c, s1, s2 = _common_tvar(a1, s1, a2, s2)
            return _sub_boxed(g, d2, s1, s2) and T.valid_variable(g, c, d2, d2, s2)
    return False


def _sub_boxed(g, d, s1, s2) -> bool:
    if T.alpha_eq(s1, s2):
        return True
    match s1, s2:
        case (T.Prod(l1, r1), T.Prod(l2, r2)) | (T.Sum(l1, r1), T.Sum(l2, r2)):
            return _sub(g, d, l1, l2) and _sub(g, d, r1, r2)
        case T.Arrow(), T.Arrow():
            return _sub_arrow(g, d, s1, s2)
    # arrays: only the reflexive case, subtiming is shallow on mutable data
    return False


def _instantiate(arrow: T.Arrow, i: int, dy: str) -> T.Arrow:
    dx = arrow.tsparams[i]
    m = {dx: dy}
    rest = arrow.tsparams[:i] + arrow.tsparams[i + 1:]
    return T.Arrow(rest, T.subst_graph(arrow.constraints, m),
                   tuple(T.tsubst(a, m) for a in arrow.args),
                   m.get(arrow.run, arrow.run), T.tsubst(arrow.ret, m))


def _sub_arrow(g, d, a1: T.Arrow, a2: T.Arrow) -> bool:
    n1, n2 = len(a1.tsparams), len(a2.tsparams)
    if n1 == n2:
        return _sub_abs(g, a1, a2)
    if n1 < n2:
        return False
    # S-Inst: drop one quantified timestamp of the left arrow, then retry
    for i in range(n1):
        rest = a1.tsparams[:i] + a1.tsparams[i + 1:]
        candidates = (set(rest) | T.free_ts(a1) | T.free_ts(a2) | T.graph_ts(g) | {d})
        for dy in sorted(candidates):
            if _sub_arrow(g, d, _instantiate(a1, i, dy), a2):
                return True
    return False


def _sub_abs(g, a1: T.Arrow, a2: T.Arrow) -> bool:
    if len(a1.args) != len(a2.args):
        return False
    avoid = set(T.free_ts(a1) | T.free_ts(a2) | T.graph_ts(g)) | set(a1.tsparams) | set(a2.tsparams)
    common = []
    for p in a1.tsparams:
        common.append(T.fresh_name(p, avoid))
        avoid.add(common[-1])
    m1 = dict(zip(a1.tsparams, common))
    m2 = dict(zip(a2.tsparams, common))
    run1, run2 = m1.get(a1.run, a1.run), m2.get(a2.run, a2.run)
    if run1 != run2:
        return False
    g2 = g | T.subst_graph(a2.constraints, m2)
    if not T.graph_subsumes(g2, T.subst_graph(a1.constraints, m1)):
        return False
    for x1, x2 in zip(a1.args, a2.args):
        if not _sub(g2, run1, T.tsubst(x2, m2), T.tsubst(x1, m1)):
            return False
    return _sub(g2, run1, T.tsubst(a1.ret, m1), T.tsubst(a2.ret, m2))


# ---------------------------------------------------------------------------
# Typing
# ---------------------------------------------------------------------------

_ARITH = {"+", "-", "*", "/", "mod"}
_COMPARE = {"<", "<=", ">", ">="}
_LOGIC = {"||", "&&"}


def typecheck(ctx: CheckCtx, e: A.Expr):
    """Return the (beta-normal) type of ``e`` or raise TypeCheckError."""
    return _Checker().check(ctx, e)


class _Checker:
    def fail(self, rule, e, detail, expected=None, found=None):
        raise TypeCheckError(rule, e.span, detail, expected, found)

    def kind(self, ctx, e, t, want: T.Kind, rule: str):
        try:
            k = T.kind_of(ctx.env, t)
        except T.KindingError as err:
            raise TypeCheckError(err.rule, e.span, err.message) from None
        if k != want:
            self.fail(rule, e, f"ill-kinded type {t}:", expected=f"kind {want}", found=f"kind {k}")

    def expect(self, rule, e, what, want, got):
        if not T.alpha_eq(want, got):
            self.fail(rule, e, what, expected=want, found=got)

    def array_of(self, rule, e, t):
        match t:
            case T.At(T.Array(elem), _):
                return elem
        self.fail(rule, e, "expected an array,", found=t)

    def check(self, ctx: CheckCtx, e: A.Expr):
        method = getattr(self, "t_" + type(e).__name__)
        return method(ctx, e)

    # -- leaves --------------------------------------------------------------

    def t_Unit(self, ctx, e):
        return T.UNIT

    def t_Int(self, ctx, e):
        return T.INT

    def t_Bool(self, ctx, e):
        return T.BOOL

    def _runtime(self, ctx, e):
        self.fail("runtime-only", e, f"runtime-only construct {type(e).__name__} is not typable")

    t_Loc = t_Folded = t_RunPar = _runtime

    def t_Var(self, ctx, e):
        t = ctx.env.terms.get(e.name)
        if t is None:
            self.fail("T-Var", e, f"unbound variable {e.name}")
        return t

    # -- structural ----------------------------------------------------------

    def t_Let(self, ctx, e):
        t1 = self.check(ctx, e.bound)
        return self.check(ctx.bind(e.name, t1), e.body)

    def t_If(self, ctx, e):
        self.expect("T-If", e.cond, "condition:", T.BOOL, self.check(ctx, e.cond))
        t1 = self.check(ctx, e.then)
        t2 = self.check(ctx, e.orelse)
        self.expect("T-If", e.orelse, "branches disagree:", t1, t2)
        return t1

    def t_Prim(self, ctx, e):
        l = self.check(ctx, e.left)
        r = self.check(ctx, e.right)
        op = e.op
        if op in _ARITH or op in _COMPARE:
            self.expect("T-Prim", e.left, f"left operand of {op}:", T.INT, l)
            self.expect("T-Prim", e.right, f"right operand of {op}:", T.INT, r)
            return T.INT if op in _ARITH else T.BOOL
        if op in _LOGIC:
            self.expect("T-Prim", e.left, f"left operand of {op}:", T.BOOL, l)
            self.expect("T-Prim", e.right, f"right operand of {op}:", T.BOOL, r)
            return T.BOOL
        self.expect("T-Prim", e.right, "operands of == must have identical types:", l, r)
        return T.BOOL

    # -- immutable blocks ----------------------------------------------------

    def t_Pair(self, ctx, e):
        return T.At(T.Prod(self.check(ctx, e.left), self.check(ctx, e.right)), ctx.current)

    def t_Proj(self, ctx, e):
        match self.check(ctx, e.arg):
            case T.At(T.Prod(l, r), _):
                return l if e.index == 1 else r
            case t:
                self.fail("T-Proj", e, "expected a product,", found=t)

    def t_Inj(self, ctx, e):
        ann = _norm(e.annot)
        self.kind(ctx, e, ann, T.STAR, "T-Inj")
        match ann:
            case T.At(T.Sum(l, r), d):
                if d != ctx.current:
                    self.fail("T-Inj", e, "injection is stamped with the current timestamp:",
                              expected=ctx.current, found=d)
                self.expect("T-Inj", e.arg, "injected value:", l if e.index == 1 else r,
                            self.check(ctx, e.arg))
                return ann
        self.fail("T-Inj", e, "annotation must be a sum type,", found=ann)

    def t_Case(self, ctx, e):
        match self.check(ctx, e.scrut):
            case T.At(T.Sum(l, r), _):
                t1 = self.check(ctx.bind(e.x1, l), e.e1)
                t2 = self.check(ctx.bind(e.x2, r), e.e2)
                self.expect("T-Case", e.e2, "arms disagree:", t1, t2)
                return t1
            case t:
                self.fail("T-Case", e.scrut, "expected a sum,", found=t)

    # -- arrays --------------------------------------------------------------

    def t_Alloc(self, ctx, e):
        self.expect("T-Array", e.size, "array size:", T.INT, self.check(ctx, e.size))
        return T.At(T.Array(self.check(ctx, e.init)), ctx.current)

    def t_Load(self, ctx, e):
        elem = self.array_of("T-Load", e.arr, self.check(ctx, e.arr))
        self.expect("T-Load", e.index, "index:", T.INT, self.check(ctx, e.index))
        return elem

    def t_Store(self, ctx, e):
        elem = self.array_of("T-Store", e.arr, self.check(ctx, e.arr))
        self.expect("T-Store", e.index, "index:", T.INT, self.check(ctx, e.index))
        self.expect("T-Store", e.value, "element type:", elem, self.check(ctx, e.value))
        return T.UNIT

    def t_Length(self, ctx, e):
        self.array_of("T-Length", e.arr, self.check(ctx, e.arr))
        return T.INT

    def t_Cas(self, ctx, e):
        elem = self.array_of("T-CAS", e.arr, self.check(ctx, e.arr))
        self.expect("T-CAS", e.index, "index:", T.INT, self.check(ctx, e.index))
        self.expect("T-CAS", e.old, "expected value:", elem, self.check(ctx, e.old))
        self.expect("T-CAS", e.new, "element type:", elem, self.check(ctx, e.new))
        return T.BOOL

    # -- functions -----------------------------------------------------------

    def t_Lam(self, ctx, e):
        an = e.annot
        if len(an.param_types) != len(e.params):
            self.fail("T-Abs", e, "parameter and annotation counts differ")
        ptypes = tuple(_norm(t) for t in an.param_types)
        ret = _norm(an.ret)
        for t in (*ptypes, ret):
            self.kind(ctx, e, t, T.STAR, "K-Arrow")
        fty = T.At(T.Arrow(an.tsparams, an.constraints, ptypes, an.run, ret), ctx.current)
        inner = CheckCtx(an.run, ctx.graph | an.constraints | {(ctx.current, an.run)},
                         ctx.env.bind_many([(e.self_name, fty), *zip(e.params, ptypes)]))
        self.expect("T-Abs", e.body, "body:", ret, self.check(inner, e.body))
        return fty

    def t_Call(self, ctx, e):
        ft = self.check(ctx, e.fn)
        match ft:
            case T.At(T.Arrow(params, cons, args, run, ret), _):
                pass
            case _:
                self.fail("T-App", e.fn, "expected a function,", found=ft)
        if len(params) != len(e.tsargs):
            self.fail("T-App", e, f"expected {len(params)} timestamp arguments,",
                      found=len(e.tsargs))
        if len(args) != len(e.args):
            self.fail("T-App", e, f"expected {len(args)} arguments,", found=len(e.args))
        m = dict(zip(params, e.tsargs))
        if m.get(run, run) != ctx.current:
            self.fail("T-App", e, "function runs at a different timestamp:",
                      expected=ctx.current, found=m.get(run, run))
        need = T.subst_graph(cons, m)
        if not T.graph_subsumes(ctx.graph, need):
            missing = sorted(c for c in need if not T.reachable(ctx.graph, *c))
            self.fail("T-App", e, "precedence constraints not entailed: "
                      + ", ".join(f"{a} < {b}" for a, b in missing))
        for a, want in zip(e.args, args):
            self.expect("T-App", a, "argument:", T.tsubst(want, m), self.check(ctx, a))
        return _norm(T.tsubst(ret, m))

    def t_Par(self, ctx, e):
        cur = ctx.current
        results = []
        for phi, branch in ((e.annot1, e.left), (e.annot2, e.right)):
            self.kind(ctx, e, phi, T.Kind(1), "T-Par")
            d = T.fresh_name("d", T.free_ts(phi) | T.graph_ts(ctx.graph) | {cur})
            want = T.Arrow((d,), frozenset({(cur, d)}), (T.UNIT,), d, _norm(T.TApp(phi, d)))
            got = self.check(ctx, branch)
            match got:
                case T.At(T.Arrow() as arrow, _) if T.alpha_eq(want, arrow):
                    pass
                case _:
                    self.fail("T-Par", branch, "parallel branch:", expected=f"{want} @ _",
                              found=got)
            results.append(_norm(T.TApp(phi, cur)))
        return T.At(T.Prod(*results), cur)

    # -- recursive types -----------------------------------------------------

    def t_Fold(self, ctx, e):
        rec = _norm(e.annot)
        if not isinstance(rec, T.Rec):
            self.fail("T-Fold", e, "annotation must be a recursive type,", found=rec)
        self.kind(ctx, e, rec, T.STAR, "T-Fold")
        self.expect("T-Fold", e.arg, "folded value:", _norm(T.unroll(rec)), self.check(ctx, e.arg))
        return rec

    def t_Unfold(self, ctx, e):
        rec = self.check(ctx, e.arg)
        if not isinstance(rec, T.Rec):
            self.fail("T-Unfold", e.arg, "expected a recursive type,", found=rec)
        self.kind(ctx, e, rec, T.STAR, "T-Unfold")
        return _norm(T.unroll(rec))

    # -- polymorphism --------------------------------------------------------

    def t_TAbs(self, ctx, e):
        if not very_pure(e.arg):
            self.fail("T-TAbs", e, "type abstraction over an expression that is not veryPure")
        inner = CheckCtx(ctx.current, ctx.graph, ctx.env.bind_tvar(e.tvar, e.kind))
        return T.Forall(e.tvar, e.kind, self.check(inner, e.arg))

    def t_TAppE(self, ctx, e):
        t = self.check(ctx, e.arg)
        if not isinstance(t, T.Forall):
            self.fail("T-TApp", e.arg, "expected a polymorphic type,", found=t)
        arg = _norm(e.type)
        self.kind(ctx, e, arg, t.kind, "T-TApp")
        return _norm(T.subst_tvar(t.body, t.tvar, arg))

    # -- annotations steering non-syntax-directed rules ----------------------

    def t_GetRoot(self, ctx, e):
        bound = ctx.env.terms.get(e.var)
        match _norm(bound) if bound is not None else None:
            case T.At(T.Array(_), d) | T.Rec(_, _, d):
                return self.check(ctx.with_edges({(d, ctx.current)}), e.arg)
            case None:
                self.fail("T-GetRoot", e, f"unbound variable {e.var}")
            case t:
                self.fail("T-GetRoot", e, f"{e.var} must have an array or recursive type,",
                          found=t)

    def t_Sub(self, ctx, e):
        target = _norm(e.target)
        self.kind(ctx, e, target, T.STAR, "T-Subtiming")
        got = self.check(ctx, e.arg)
        if not subtime(ctx.graph, ctx.current, got, target):
            self.fail("T-Subtiming", e, "no subtiming derivation:", expected=target, found=got)
        return target


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------


def check_expr(e: A.Expr, ctx: Optional[CheckCtx] = None):
    return typecheck(ctx or CheckCtx(), e)


def check_program(prog: SourceProgram):
    """Elaborate and type a whole program at the initial timestamp."""
    return check_expr(elaborate_program(prog))


def decl_types(prog: SourceProgram) -> dict[str, T.Type]:
    """Type of every top-level definition, in order (stops at the first error)."""
    out = {}
    e = elaborate_program(prog)
    ctx = CheckCtx()
    checker = _Checker()
    names = [d.name for d in prog.decls]
    for name in names:
        assert isinstance(e, A.Let)
        t = checker.check(ctx, e.bound)
        out[name] = t
        ctx = ctx.bind(e.name, t)
        e = e.body
    out["main"] = checker.check(ctx, e)
    return out
