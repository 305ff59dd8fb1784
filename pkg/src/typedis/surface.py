"""Concrete syntax: lexer, parser, printer and elaboration.

A program file is a sequence of ``type NAME = T`` aliases and ``def NAME = e``
definitions followed by an optional ``main e``.  Comments run from ``--`` to
the end of the line.  Runtime-only forms (``#n`` locations, ``⟨fold v⟩`` and
``⟨e ∥ e⟩``) are only accepted when parsing with ``runtime=True``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from typedis import ast as A
from typedis import types as T
from typedis.ast import Span

TOP_TS = "d0"  # timestamp of the initial task

KEYWORDS = frozenset("""
    let in if then else fun fst snd inj1 inj2 case of alloc length cas fold
    unfold par sub getroot tfun mu forall array unit bool int true false mod
    def type main
""".split())

_COMPOUND = frozenset({"let", "if", "fun", "case", "getroot", "tfun"})

_TOKEN_RE = re.compile(r"""
    (?P<nl>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<comment>--[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>->|<-|<=|>=|==|\|\||&&|::|\.\[|[()\[\]{},:=<>+\-*/@|.\\\#⟨⟩∥])
""", re.VERBOSE)

_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "mod"),
)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    span: Span
    message: str
    rule: Optional[str] = None

    def __str__(self):
        tag = f" [{self.rule}]" if self.rule else ""
        return f"{self.span}:{tag} {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: Span


@dataclass
class Decl:
    name: str
    expr: A.Expr
    span: Span


@dataclass
class SourceProgram:
    file: str
    aliases: dict[str, T.Type] = field(default_factory=dict)
    decls: list[Decl] = field(default_factory=list)
    main: A.Expr = field(default_factory=lambda: A.UNIT_V)

    def to_expr(self) -> A.Expr:
        e = self.main
        for d in reversed(self.decls):
            e = A.Let(d.name, d.expr, e, span=d.span)
        return e


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    out = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        span = Span(file, line, pos - line_start + 1)
        if m is None:
            raise ParseError(Diagnostic("error", span, f"unexpected character {text[pos]!r}", "syntax"))
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("int", "op"):
            out.append(Token(kind, m.group(), span))
        elif kind == "ident":
            out.append(Token("kw" if m.group() in KEYWORDS else "ident", m.group(), span))
        pos = m.end()
    out.append(Token("eof", "", Span(file, line, pos - line_start + 1)))
    return out


class Parser:
    def __init__(self, text: str, file: str = "<input>", runtime: bool = False,
                 aliases: Optional[dict] = None):
        self.toks = tokenize(text, file)
        self.pos = 0
        self.file = file
        self.runtime = runtime
        self.aliases: dict[str, T.Type] = dict(aliases or {})
        self.tvar_scope: list[str] = []

    # -- token helpers ------------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("op", "kw")

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def error(self, message: str, tok: Optional[Token] = None, rule: str = "syntax"):
        tok = tok or self.peek()
        raise ParseError(Diagnostic("error", tok.span, message, rule))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.peek().text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        return self.next()

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.pos += 1
        return t.text

    def runtime_only(self, tok: Token, what: str):
        if not self.runtime:
            self.error(f"runtime-only construct in source: {what}", tok, "runtime-only")

    # -- programs -----------------------------------------------------------

    def program(self) -> SourceProgram:
        prog = SourceProgram(self.file)
        while True:
            if self.at("type"):
                self.next()
                name = self.ident()
                self.expect("=")
                self.aliases[name] = self.type()
                prog.aliases[name] = self.aliases[name]
            elif self.at("def"):
                tok = self.next()
                name = self.ident()
                self.expect("=")
                prog.decls.append(Decl(name, self.expr(), tok.span))
            else:
                break
        if self.at("main"):
            self.next()
            prog.main = self.expr()
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r}")
        return prog

    # -- expressions --------------------------------------------------------

    def expr(self) -> A.Expr:
        t = self.peek()
        sp = t.span
        if t.kind == "kw":
            if t.text == "let":
                self.next()
                name = self.ident()
                self.expect("=")
                bound = self.expr()
                self.expect("in")
                return A.Let(name, bound, self.expr(), span=sp)
            if t.text == "if":
                self.next()
                c = self.expr()
                self.expect("then")
                a = self.expr()
                self.expect("else")
                return A.If(c, a, self.expr(), span=sp)
            if t.text == "fun":
                return self.lam()
            if t.text == "case":
                self.next()
                scrut = self.expr()
                self.expect("of")
                self.expect("inj1")
                x1 = self.ident()
                self.expect("->")
                e1 = self.expr()
                self.expect("|")
                self.expect("inj2")
                x2 = self.ident()
                self.expect("->")
                return A.Case(scrut, x1, e1, x2, self.expr(), span=sp)
            if t.text == "getroot":
                self.next()
                x = self.ident()
                self.expect("in")
                return A.GetRoot(x, self.expr(), span=sp)
            if t.text == "tfun":
                self.next()
                a = self.ident()
                self.expect("::")
                k = self.kind()
                self.expect("->")
                self.tvar_scope.append(a)
                try:
                    body = self.expr()
                finally:
                    self.tvar_scope.pop()
                return A.TAbs(a, k, body, span=sp)
        return self.binary(0)

    def lam(self) -> A.Lam:
        sp = self.expect("fun").span
        name = self.ident()
        tsparams, cons = [], []
        if self.at("["):
            self.next()
            while self.peek().kind == "ident":
                tsparams.append(self.ident())
            if self.at("|"):
                self.next()
                cons = self.constraints()
            self.expect("]")
        self.expect("(")
        params, ptypes = [], []
        if not self.at(")"):
            while True:
                params.append(self.ident())
                self.expect(":")
                ptypes.append(self.type())
                if not self.at(","):
                    break
                self.next()
        self.expect(")")
        self.expect("@")
        run = self.ident()
        self.expect(":")
        ret = self.type()
        self.expect("->")
        body = self.expr()
        annot = A.AbsAnnot(tuple(tsparams), frozenset(cons), tuple(ptypes), run, ret)
        return A.Lam(name, tuple(params), annot, body, span=sp)

    def constraints(self) -> list[tuple[str, str]]:
        out = []
        while self.peek().kind == "ident":
            a = self.ident()
            self.expect("<")
            out.append((a, self.ident()))
            if not self.at(","):
                break
            self.next()
        return out

    def binary(self, level: int) -> A.Expr:
        if level == len(_BINARY_LEVELS):
            return self.prefix()
        left = self.binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.peek().kind in ("op", "kw") and self.peek().text in ops:
            tok = self.next()
            right = self.binary(level + 1)
            left = A.Prim(tok.text, left, right, span=tok.span)
        return left

    def prefix(self) -> A.Expr:
        t = self.peek()
        sp = t.span
        if t.kind == "kw":
            if t.text in _COMPOUND:
                return self.expr()
            if t.text in ("fst", "snd"):
                self.next()
                return A.Proj(1 if t.text == "fst" else 2, self.prefix(), span=sp)
            if t.text == "length":
                self.next()
                return A.Length(self.prefix(), span=sp)
            if t.text == "unfold":
                self.next()
                return A.Unfold(self.prefix(), span=sp)
            if t.text in ("inj1", "inj2", "fold", "sub"):
                self.next()
                self.expect("[")
                ty = self.type()
                self.expect("]")
                arg = self.prefix()
                if t.text == "fold":
                    return A.Fold(ty, arg, span=sp)
                if t.text == "sub":
                    return A.Sub(ty, arg, span=sp)
                return A.Inj(1 if t.text == "inj1" else 2, ty, arg, span=sp)
        return self.postfix()

    def args(self) -> tuple[A.Expr, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                out.append(self.expr())
                if not self.at(","):
                    break
                self.next()
        self.expect(")")
        return tuple(out)

    def postfix(self) -> A.Expr:
        e = self.atom()
        while True:
            t = self.peek()
            if self.at("["):
                self.next()
                ts = []
                while self.peek().kind == "ident":
                    ts.append(self.ident())
                self.expect("]")
                e = A.Call(e, tuple(ts), self.args(), span=t.span)
            elif self.at("("):
                e = A.Call(e, (), self.args(), span=t.span)
            elif self.at("{"):
                self.next()
                ty = self.type()
                self.expect("}")
                e = A.TAppE(e, ty, span=t.span)
            elif self.at(".["):
                self.next()
                idx = self.expr()
                self.expect("]")
                if self.at("<-"):
                    self.next()
                    return A.Store(e, idx, self.expr(), span=t.span)
                e = A.Load(e, idx, span=t.span)
            else:
                return e

    def atom(self) -> A.Expr:
        t = self.peek()
        sp = t.span
        if t.kind == "int":
            self.next()
            return A.Int(int(t.text), span=sp)
        if self.at("-") and self.peek(1).kind == "int":
            self.next()
            return A.Int(-int(self.next().text), span=sp)
        if t.kind == "ident":
            self.next()
            return A.Var(t.text, span=sp)
        if self.at("true") or self.at("false"):
            self.next()
            return A.Bool(t.text == "true", span=sp)
        if self.at("("):
            self.next()
            if self.at(")"):
                self.next()
                return A.Unit(span=sp)
            e = self.expr()
            if self.at(","):
                self.next()
                e2 = self.expr()
                self.expect(")")
                return A.Pair(e, e2, span=sp)
            self.expect(")")
            return e
        if self.at("alloc"):
            self.next()
            self.expect("(")
            n = self.expr()
            self.expect(",")
            v = self.expr()
            self.expect(")")
            return A.Alloc(n, v, span=sp)
        if self.at("cas"):
            self.next()
            a = self.args()
            if len(a) != 4:
                self.error("cas takes exactly four arguments", t)
            return A.Cas(*a, span=sp)
        if self.at("par"):
            self.next()
            self.expect("[")
            t1 = self.type()
            self.expect(",")
            t2 = self.type()
            self.expect("]")
            a = self.args()
            if len(a) != 2:
                self.error("par takes exactly two arguments", t)
            return A.Par(t1, t2, a[0], a[1], span=sp)
        if self.at("#"):
            self.runtime_only(t, "location literal")
            self.next()
            n = self.peek()
            if n.kind != "int":
                self.error("expected location number")
            self.next()
            return A.Loc(int(n.text), span=sp)
        if self.at("⟨"):
            self.next()
            if self.at("fold"):
                self.runtime_only(t, "folded value")
                self.next()
                v = self.expr()
                self.expect("⟩")
                if not A.is_value(v):
                    self.error("folded form holds a value", t)
                return A.Folded(v, span=sp)
            self.runtime_only(t, "active parallel pair")
            e1 = self.expr()
            self.expect("∥")
            e2 = self.expr()
            self.expect("⟩")
            return A.RunPar(e1, e2, span=sp)
        self.error(f"unexpected {t.text or 'end of input'!r}")

    # -- types --------------------------------------------------------------

    def kind(self) -> T.Kind:
        self.expect("*")
        n = 0
        while self.at("+"):
            self.next()
            n += 1
        return T.Kind(n)

    def type(self, bound: frozenset = frozenset()) -> T.Type:
        if self.at("forall"):
            self.next()
            a = self.ident()
            self.expect("::")
            k = self.kind()
            self.expect(".")
            return T.Forall(a, k, self.type(bound | {a}))
        if self.at("mu"):
            self.next()
            a = self.ident()
            self.expect(".")
            b = self.boxed(bound | {a})
            self.expect("@")
            return T.Rec(a, b, self.ident())
        if self.at("\\"):
            self.next()
            d = self.ident()
            self.expect(".")
            return T.TLam(d, self.type(bound))
        return self.app_type(self.atom_type(bound))

    def app_type(self, t):
        while self.peek().kind == "ident":
            t = T.TApp(t, self.ident())
        return t

    def stamped(self, b, bound, tok) -> T.Type:
        if not self.at("@"):
            self.error("boxed type needs a timestamp (@ d)", tok)
        self.next()
        return T.At(b, self.ident())

    def atom_type(self, bound) -> T.Type:
        t = self.peek()
        if t.kind == "kw" and t.text in ("unit", "bool", "int"):
            self.next()
            return T.Unboxed(t.text)
        if t.kind == "ident":
            self.next()
            if t.text not in bound and t.text not in self.tvar_scope and t.text in self.aliases:
                return self.aliases[t.text]
            return T.TVar(t.text)
        if self.at("array") or self.at("["):
            return self.stamped(self.boxed(bound), bound, t)
        if self.at("("):
            r = self.paren(bound)
            if isinstance(r, T.Boxed):
                return self.stamped(r, bound, t)
            return r
        self.error(f"expected a type, found {t.text or 'end of input'!r}")

    def paren(self, bound):
        """``( ... )``: a grouped type, a product/sum, or a grouped boxed type."""
        self.expect("(")
        tok = self.peek()
        if self.at("array") or self.at("["):
            x = self.boxed(bound)
            if self.at("@"):
                x = self.stamped(x, bound, tok)
        elif self.at("("):
            x = self.paren(bound)
            if isinstance(x, T.Boxed):
                if self.at("@"):
                    x = self.stamped(x, bound, tok)
            else:
                x = self.app_type(x)
        else:
            x = self.type(bound)
        if self.at("*") or self.at("+"):
            op = self.next().text
            if isinstance(x, T.Boxed):
                self.error("boxed type needs a timestamp (@ d)", tok)
            y = self.type(bound)
            b = T.Prod(x, y) if op == "*" else T.Sum(x, y)
            if self.at("@"):
                # ``(T * T @ d)`` stamps the product inside the parentheses
                b = self.stamped(b, bound, tok)
            self.expect(")")
            return b
        self.expect(")")
        return x

    def boxed(self, bound) -> T.Boxed:
        tok = self.peek()
        if self.at("array"):
            self.next()
            return T.Array(self.type(bound))
        if self.at("["):
            self.next()
            params, cons = [], []
            while self.peek().kind == "ident":
                params.append(self.ident())
            if self.at("|"):
                self.next()
                cons = self.constraints()
            self.expect("]")
            self.expect("(")
            args = []
            if not self.at(")"):
                while True:
                    args.append(self.type(bound))
                    if not self.at(","):
                        break
                    self.next()
            self.expect(")")
            self.expect("->")
            run = self.ident()
            ret = self.type(bound)
            return T.Arrow(tuple(params), frozenset(cons), tuple(args), run, ret)
        if self.at("("):
            r = self.paren(bound)
            if isinstance(r, T.Boxed):
                return r
            self.error("expected a boxed type", tok)
        self.error(f"expected a boxed type, found {tok.text or 'end of input'!r}")


def parse_program(text: str, file: str = "<input>") -> SourceProgram:
    return Parser(text, file).program()


def parse_expr(text: str, file: str = "<input>", runtime: bool = False,
               aliases: Optional[dict] = None) -> A.Expr:
    p = Parser(text, file, runtime=runtime, aliases=aliases)
    e = p.expr()
    if p.peek().kind != "eof":
        p.error(f"unexpected {p.peek().text!r}")
    return e


def parse_type(text: str, file: str = "<input>", aliases: Optional[dict] = None) -> T.Type:
    p = Parser(text, file, aliases=aliases)
    t = p.type()
    if p.peek().kind != "eof":
        p.error(f"unexpected {p.peek().text!r}")
    return t


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _cons(cons) -> str:
    return ", ".join(f"{a} < {b}" for a, b in sorted(cons))


def _ts_binder(params, cons) -> str:
    inner = " ".join(params)
    if cons:
        inner = f"{inner} | {_cons(cons)}" if inner else f"| {_cons(cons)}"
    return f"[{inner}]"


def _type_atomic(t) -> bool:
    return isinstance(t, (T.Unboxed, T.TVar))


def _ptype_arg(t) -> str:
    s = print_type(t)
    return s if _type_atomic(t) else f"({s})"


def print_type(t) -> str:
    match t:
        case T.Unboxed(name):
            return name
        case T.TVar(name):
            return name
        case T.TLam(d, body):
            return f"\\{d}. {print_type(body)}"
        case T.TApp(fn, d):
            fs = print_type(fn)
            if not isinstance(fn, (T.TVar, T.TApp)):
                fs = f"({fs})"
            return f"{fs} {d}"
        case T.Forall(a, k, body):
            return f"forall {a} :: {k} . {print_type(body)}"
        case T.Rec(a, body, d):
            return f"mu {a} . {_pboxed(body)} @ {d}"
        case T.At(body, d):
            return f"{_pboxed(body)} @ {d}"
        case T.Boxed():
            return _pboxed(t)
    raise TypeError(f"not a type: {t!r}")


def _pboxed(b) -> str:
    match b:
        case T.Array(elem):
            return f"array {_ptype_arg(elem)}"
        case T.Prod(l, r):
            return f"({_ptype_arg(l) if isinstance(l, T.Forall) else print_type(l)}"\
                   f" * {print_type(r)})"
        case T.Sum(l, r):
            return f"({_ptype_arg(l) if isinstance(l, T.Forall) else print_type(l)}"\
                   f" + {print_type(r)})"
        case T.Arrow(params, cons, args, run, ret):
            a = ", ".join(print_type(x) for x in args)
            return f"{_ts_binder(params, cons)}({a}) -> {run} {_ptype_arg(ret)}"
    raise TypeError(f"not a boxed type: {b!r}")


_LEVEL = {op: i + 1 for i, ops in enumerate(_BINARY_LEVELS) for op in ops}
_PREFIX = 6
_POSTFIX = 7
_ATOM = 8


def print_expr(e: A.Expr) -> str:
    return _pe(e, 0)


def _wrap(s: str, level: int, need: int) -> str:
    return s if level >= need else f"({s})"


def _pe(e: A.Expr, need: int) -> str:
    match e:
        case A.Unit():
            return "()"
        case A.Bool(b):
            return "true" if b else "false"
        case A.Int(n):
            return str(n)
        case A.Loc(n):
            return f"#{n}"
        case A.Folded(v):
            return f"⟨fold {_pe(v, 0)}⟩"
        case A.Var(name):
            return name
        case A.Let(x, b, body):
            return _wrap(f"let {x} = {_pe(b, 0)} in\n{_pe(body, 0)}", 0, need)
        case A.If(c, a, b):
            return _wrap(f"if {_pe(c, 0)} then {_pe(a, 0)} else {_pe(b, 0)}", 0, need)
        case A.Prim(op, l, r):
            lv = _LEVEL[op]
            left_need = lv + 1 if lv == 3 else lv
            return _wrap(f"{_pe(l, left_need)} {op} {_pe(r, lv + 1)}", lv, need)
        case A.Lam(f, params, an, body):
            head = f"fun {f} "
            if an.tsparams or an.constraints:
                head += _ts_binder(an.tsparams, an.constraints) + " "
            ps = ", ".join(f"{x}: {print_type(t)}" for x, t in zip(params, an.param_types))
            s = f"{head}({ps}) @{an.run} : {print_type(an.ret)} -> {_pe(body, 0)}"
            return _wrap(s, 0, need)
        case A.Call(fn, ts, args):
            a = ", ".join(_pe(x, 0) for x in args)
            tss = f" [{' '.join(ts)}] " if ts else ""
            return _wrap(f"{_pe(fn, _POSTFIX)}{tss}({a})", _POSTFIX, need)
        case A.Pair(l, r):
            return f"({_pe(l, 0)}, {_pe(r, 0)})"
        case A.Proj(i, arg):
            return _wrap(f"{'fst' if i == 1 else 'snd'} {_pe(arg, _PREFIX)}", _PREFIX, need)
        case A.Inj(i, ty, arg):
            return _wrap(f"inj{i}[{print_type(ty)}] {_pe(arg, _PREFIX)}", _PREFIX, need)
        case A.Case(s, x1, e1, x2, e2):
            return _wrap(f"case {_pe(s, 0)} of inj1 {x1} -> {_pe(e1, 1)}\n"
                         f"| inj2 {x2} -> {_pe(e2, 0)}", 0, need)
        case A.Alloc(n, v):
            return f"alloc({_pe(n, 0)}, {_pe(v, 0)})"
        case A.Load(a, i):
            return _wrap(f"{_pe(a, _POSTFIX)}.[{_pe(i, 0)}]", _POSTFIX, need)
        case A.Store(a, i, v):
            return _wrap(f"{_pe(a, _POSTFIX)}.[{_pe(i, 0)}] <- {_pe(v, 0)}", 0, need)
        case A.Length(a):
            return _wrap(f"length {_pe(a, _PREFIX)}", _PREFIX, need)
        case A.Cas(a, i, o, n):
            return f"cas({_pe(a, 0)}, {_pe(i, 0)}, {_pe(o, 0)}, {_pe(n, 0)})"
        case A.Fold(ty, arg):
            return _wrap(f"fold[{print_type(ty)}] {_pe(arg, _PREFIX)}", _PREFIX, need)
        case A.Unfold(arg):
            return _wrap(f"unfold {_pe(arg, _PREFIX)}", _PREFIX, need)
        case A.Par(t1, t2, l, r):
            return f"par[{print_type(t1)}, {print_type(t2)}]({_pe(l, 0)}, {_pe(r, 0)})"
        case A.RunPar(l, r):
            return f"⟨{_pe(l, 0)} ∥ {_pe(r, 0)}⟩"
        case A.Sub(ty, arg):
            return _wrap(f"sub[{print_type(ty)}] {_pe(arg, _PREFIX)}", _PREFIX, need)
        case A.GetRoot(x, arg):
            return _wrap(f"getroot {x} in {_pe(arg, 0)}", 0, need)
        case A.TAbs(a, k, arg):
            return _wrap(f"tfun {a} :: {k} -> {_pe(arg, 0)}", 0, need)
        case A.TAppE(arg, ty):
            return _wrap(f"{_pe(arg, _POSTFIX)} {{{print_type(ty)}}}", _POSTFIX, need)
    raise TypeError(f"not an expression: {e!r}")


def print_program(prog: SourceProgram) -> str:
    lines = [f"def {d.name} =\n{print_expr(d.expr)}\n" for d in prog.decls]
    lines.append(f"main {print_expr(prog.main)}\n")
    return "\n".join(lines)


def pretty(x) -> str:
    """Print either an expression or a type."""
    if isinstance(x, A.Expr):
        return print_expr(x)
    return print_type(x)


# ---------------------------------------------------------------------------
# Elaboration
# ---------------------------------------------------------------------------


def _names_in_type(t, out: set):
    match t:
        case T.TVar(n):
            out.add(n)
        case T.TLam(d, body):
            out.add(d)
            _names_in_type(body, out)
        case T.TApp(fn, d):
            out.add(d)
            _names_in_type(fn, out)
        case T.Forall(a, _, body):
            out.add(a)
            _names_in_type(body, out)
        case T.Rec(a, body, d):
            out.update((a, d))
            _names_in_type(body, out)
        case T.At(body, d):
            out.add(d)
            _names_in_type(body, out)
        case T.Array(elem):
            _names_in_type(elem, out)
        case T.Prod(l, r) | T.Sum(l, r):
            _names_in_type(l, out)
            _names_in_type(r, out)
        case T.Arrow(params, cons, args, run, ret):
            out.update(params)
            out.add(run)
            for x, y in cons:
                out.update((x, y))
            for a in args:
                _names_in_type(a, out)
            _names_in_type(ret, out)


def _names(e: A.Expr, out: set):
    match e:
        case A.Var(n):
            out.add(n)
        case A.Let(x, _, _):
            out.add(x)
        case A.Case(_, x1, _, x2, _):
            out.update((x1, x2))
        case A.Lam(f, params, an, _):
            out.add(f)
            out.update(params)
            out.update(an.tsparams)
            out.add(an.run)
            for x, y in an.constraints:
                out.update((x, y))
            for t in (*an.param_types, an.ret):
                _names_in_type(t, out)
        case A.Call(_, ts, _):
            out.update(ts)
        case A.Inj(_, t, _) | A.Fold(t, _) | A.Sub(t, _) | A.TAppE(_, t):
            _names_in_type(t, out)
        case A.Par(t1, t2, _, _):
            _names_in_type(t1, out)
            _names_in_type(t2, out)
        case A.GetRoot(x, _):
            out.add(x)
        case A.TAbs(a, _, _):
            out.add(a)
    for k in e.children():
        _names(k, out)


class _Renamer:
    def __init__(self, e: A.Expr, reserved=(TOP_TS,)):
        self.used: set[str] = set()
        _names(e, self.used)
        self.claimed: set[str] = set(reserved)

    def fresh(self, name: str) -> str:
        if name not in self.claimed:
            self.claimed.add(name)
            return name
        base = name.rstrip("0123456789").rstrip("_") or "v"
        k = 1
        while f"{base}_{k}" in self.used or f"{base}_{k}" in self.claimed:
            k += 1
        new = f"{base}_{k}"
        self.claimed.add(new)
        self.used.add(new)
        return new

    def ty(self, t, ts, tv):
        if ts:
            t = T.tsubst(t, ts)
        for a, b in tv.items():
            t = T.subst_tvar(t, a, T.TVar(b))
        return t

    def go(self, e: A.Expr, vs: dict, ts: dict, tv: dict) -> A.Expr:
        sp = e.span
        match e:
            case A.Var(n):
                return A.Var(vs.get(n, n), span=sp)
            case A.Let(x, b, body):
                x2 = self.fresh(x)
                b = self.go(b, vs, ts, tv)
                return A.Let(x2, b, self.go(body, {**vs, x: x2}, ts, tv), span=sp)
            case A.Case(s, x1, e1, x2, e2):
                s = self.go(s, vs, ts, tv)
                y1, y2 = self.fresh(x1), self.fresh(x2)
                return A.Case(s, y1, self.go(e1, {**vs, x1: y1}, ts, tv),
                              y2, self.go(e2, {**vs, x2: y2}, ts, tv), span=sp)
            case A.Lam(f, params, an, body):
                ts2 = dict(ts)
                for d in an.tsparams:
                    ts2[d] = self.fresh(d)
                vs2 = dict(vs)
                f2 = self.fresh(f)
                vs2[f] = f2
                ps = []
                for x in params:
                    ps.append(self.fresh(x))
                    vs2[x] = ps[-1]
                an2 = A.AbsAnnot(
                    tuple(ts2[d] for d in an.tsparams),
                    T.subst_graph(an.constraints, ts2),
                    tuple(self.ty(t, ts2, tv) for t in an.param_types),
                    ts2.get(an.run, an.run),
                    self.ty(an.ret, ts2, tv),
                )
                return A.Lam(f2, tuple(ps), an2, self.go(body, vs2, ts2, tv), span=sp)
            case A.Call(fn, tsargs, args):
                return A.Call(self.go(fn, vs, ts, tv), tuple(ts.get(d, d) for d in tsargs),
                              tuple(self.go(a, vs, ts, tv) for a in args), span=sp)
            case A.Inj(i, t, arg):
                return A.Inj(i, self.ty(t, ts, tv), self.go(arg, vs, ts, tv), span=sp)
            case A.Fold(t, arg):
                return A.Fold(self.ty(t, ts, tv), self.go(arg, vs, ts, tv), span=sp)
            case A.Sub(t, arg):
                return A.Sub(self.ty(t, ts, tv), self.go(arg, vs, ts, tv), span=sp)
            case A.TAppE(arg, t):
                return A.TAppE(self.go(arg, vs, ts, tv), self.ty(t, ts, tv), span=sp)
            case A.Par(t1, t2, l, r):
                return A.Par(self.ty(t1, ts, tv), self.ty(t2, ts, tv),
                             self.go(l, vs, ts, tv), self.go(r, vs, ts, tv), span=sp)
            case A.GetRoot(x, arg):
                return A.GetRoot(vs.get(x, x), self.go(arg, vs, ts, tv), span=sp)
            case A.TAbs(a, k, arg):
                a2 = self.fresh(a)
                tv2 = {**tv, a: a2} if a2 != a else {k_: v for k_, v in tv.items() if k_ != a}
                return A.TAbs(a2, k, self.go(arg, vs, ts, tv2), span=sp)
        kids = e.children()
        if not kids:
            return e
        return e.rebuild(tuple(self.go(k, vs, ts, tv) for k in kids))


def elaborate(e: A.Expr) -> A.Expr:
    """Rename every binder apart (terms, abstraction timestamps, type variables)."""
    return _Renamer(e).go(e, {}, {}, {})


def elaborate_program(prog: SourceProgram) -> A.Expr:
    return elaborate(prog.to_expr())
