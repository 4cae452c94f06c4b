"""Orchestration language front end: AST, parser, printer, substitution.

The core calculus is tiny: site calls, expression calls, parallel
composition `f | g`, sequencing `f >x> g`, and asymmetric parallel
`f <x< g`.  Everything else in the surface syntax (infix arithmetic and
comparisons inside call arguments, tuple binders, `>>`, `~`, projection
`x.0`) is desugared during parsing into calls on built-in sites, so the
rest of the package only ever sees core terms.

Operator precedence, tightest first: sequencing, then `|`, then `<x<`.
Sequencing associates to the right, the other two to the left.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

from .values import Bool, Const, Int, Rat, Signal, Str, TupleV, const_str, mk_num

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, slots=True)
class Var:
    """A bound occurrence of a sequencing or pruning binder."""

    name: str


@dataclass(frozen=True, slots=True)
class SiteName:
    """An unresolved global site name; deployment maps it to a reference."""

    name: str


@dataclass(frozen=True, slots=True)
class Lit:
    value: Const


Arg = Union[Var, SiteName, Lit]


@dataclass(frozen=True, slots=True)
class Silent:
    """The expression that never does anything (written `0`)."""


@dataclass(frozen=True, slots=True)
class SiteCall:
    target: Arg
    args: tuple[Arg, ...]


@dataclass(frozen=True, slots=True)
class ExprCall:
    name: str
    args: tuple[Arg, ...]


@dataclass(frozen=True, slots=True)
class Par:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Seq:
    """`left >binder> right`: run left, start a copy of right per value."""

    left: "Expr"
    binder: str
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Where:
    """`left <binder< right`: run both, prune right at its first value."""

    left: "Expr"
    binder: str
    right: "Expr"


# The runtime layer extends the tree with leaf nodes of its own (pending
# calls, running timers, unconsumed values).  Traversals in this module
# treat any unrecognized node as a closed leaf, which is exactly right
# for those extensions.
Expr = Union[Silent, SiteCall, ExprCall, Par, Seq, Where]


@dataclass(frozen=True, slots=True)
class Decl:
    name: str
    params: tuple[str, ...]
    body: Expr


@dataclass(frozen=True, slots=True)
class Program:
    decls: tuple[Decl, ...]
    main: Expr

    def decl(self, name: str) -> Decl:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class ScopeError(ValueError):
    pass


RESERVED = ("true", "false", "signal")


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+|--[^\n]*)
    | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<nat>\d+)
    | (?P<string>"(?:\\.|[^"\\])*")
    | (?P<op>=def|:=|>>|!=|/=|<=|>=|[()|<>,;=+\-*~./])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # "name" | "nat" | "string" | an operator's own text | "eof"
    text: str
    line: int
    col: int


_STRING_UNESCAPE = {"\\\\": "\\", '\\"': '"', "\\n": "\n"}


def _unescape(body: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(body):
        if body[i] == "\\" and i + 1 < len(body):
            pair = body[i : i + 2]
            if pair not in _STRING_UNESCAPE:
                raise ValueError(f"bad escape {pair!r}")
            out.append(_STRING_UNESCAPE[pair])
            i += 2
        else:
            out.append(body[i])
            i += 1
    return "".join(out)


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"stray character {src[pos]!r}", line, col)
        text = m.group(0)
        if m.lastgroup == "name":
            toks.append(Token("name", text, line, col))
        elif m.lastgroup == "nat":
            toks.append(Token("nat", text, line, col))
        elif m.lastgroup == "string":
            try:
                toks.append(Token("string", _unescape(text[1:-1]), line, col))
            except ValueError as exc:
                raise ParseError(str(exc), line, col) from exc
        elif m.lastgroup == "op":
            toks.append(Token(text, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Argument expressions (the infix sublanguage inside call parentheses)


@dataclass(frozen=True, slots=True)
class _ALit:
    value: Const


@dataclass(frozen=True, slots=True)
class _AName:
    name: str
    is_var: bool


@dataclass(frozen=True, slots=True)
class _ABin:
    op: str
    left: "_ArgExpr"
    right: "_ArgExpr"


@dataclass(frozen=True, slots=True)
class _ANot:
    inner: "_ArgExpr"


@dataclass(frozen=True, slots=True)
class _AProj:
    inner: "_ArgExpr"
    index: int


@dataclass(frozen=True, slots=True)
class _ACall:
    name: str
    is_var: bool
    args: tuple["_ArgExpr", ...]


_ArgExpr = Union[_ALit, _AName, _ABin, _ANot, _AProj, _ACall]

# op token -> (site name, swap argument order?)
_CMP_SITES = {
    "=": ("eq", False),
    "!=": ("neq", False),
    "/=": ("neq", False),
    "<=": ("leq", False),
    ">": ("gt", False),
    "<": ("gt", True),
    ">=": ("leq", True),
}
_ADD_SITES = {"+": "add", "-": "sub"}


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, toks: list[Token], decls: frozenset[str]):
        self.toks = toks
        self.i = 0
        self.decls = decls
        self.idents = {t.text for t in toks if t.kind == "name"}
        self._fresh_n = 0

    # -- token helpers

    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.next()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return t

    def fail(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)

    def fresh(self) -> str:
        while True:
            name = f"_g{self._fresh_n}"
            self._fresh_n += 1
            if name not in self.idents:
                self.idents.add(name)
                return name

    # -- expression grammar

    def parse_expr(self, scope: frozenset[str]) -> Expr:
        left = self.parse_par(scope)
        while self.peek().kind == "<":
            self.next()
            binder = self.parse_binder_name()
            self.expect("<")
            right = self.parse_par(scope)
            # The binder scopes over the left side only, and the left
            # was parsed before the binder was known, so free uses of
            # it were classified as site names.  Rebind them now; uses
            # under an inner binder of the same name are already Var
            # and stay untouched.
            left = Where(_rebind(left, binder), binder, right)
        return left

    def parse_par(self, scope: frozenset[str]) -> Expr:
        left = self.parse_seq(scope)
        while self.peek().kind == "|":
            self.next()
            left = Par(left, self.parse_seq(scope))
        return left

    def parse_seq(self, scope: frozenset[str]) -> Expr:
        left = self.parse_basic(scope)
        t = self.peek()
        if t.kind == ">>":
            self.next()
            binder = self.fresh()
            return Seq(left, binder, self.parse_seq(scope | {binder}))
        if t.kind == ">":
            self.next()
            if self.peek().kind == "(":
                names = self.parse_tuple_binder()
                self.expect(">")
                g = self.fresh()
                inner = self.parse_seq(scope | {g} | set(names))
                for k in range(len(names) - 1, -1, -1):
                    proj = SiteCall(SiteName("proj"), (Lit(Int(k)), Var(g)))
                    inner = Seq(proj, names[k], inner)
                return Seq(left, g, inner)
            binder = self.parse_binder_name()
            self.expect(">")
            return Seq(left, binder, self.parse_seq(scope | {binder}))
        return left

    def parse_binder_name(self) -> str:
        t = self.expect("name")
        if t.text in RESERVED:
            raise ParseError(f"{t.text!r} cannot be a binder", t.line, t.col)
        return t.text

    def parse_tuple_binder(self) -> tuple[str, ...]:
        self.expect("(")
        names = [self.parse_binder_name()]
        while self.peek().kind == ",":
            self.next()
            names.append(self.parse_binder_name())
        self.expect(")")
        if len(set(names)) != len(names):
            raise self.fail("duplicate name in tuple binder")
        return tuple(names)

    def parse_basic(self, scope: frozenset[str]) -> Expr:
        t = self.peek()
        if t.kind == "(":
            self.next()
            e = self.parse_expr(scope)
            self.expect(")")
            return e
        if t.kind == "nat":
            self.next()
            if t.text == "0":
                return Silent()
            return SiteCall(SiteName("let"), (Lit(Int(int(t.text))),))
        if t.kind == "string":
            self.next()
            return SiteCall(SiteName("let"), (Lit(Str(t.text)),))
        if t.kind == "name":
            if t.text in RESERVED:
                self.next()
                return SiteCall(SiteName("let"), (Lit(_reserved_const(t.text)),))
            name = self.next().text
            if self.peek().kind == "(":
                return self.parse_call(name, scope)
            if name in self.decls:
                return ExprCall(name, ())
            if name in scope:
                return SiteCall(SiteName("let"), (Var(name),))
            return SiteCall(SiteName(name), ())
        raise self.fail(f"expected an expression, found {t.text or 'end of input'!r}")

    def parse_call(self, name: str, scope: frozenset[str]) -> Expr:
        args = self.parse_arg_list(scope)
        lowered: list[Arg] = []
        hoists: list[tuple[str, Expr]] = []
        for a in args:
            arg, hs = self.lower_arg(a, scope)
            hoists.extend(hs)
            lowered.append(arg)
        if name in self.decls:
            core: Expr = ExprCall(name, tuple(lowered))
        elif name in scope:
            core = SiteCall(Var(name), tuple(lowered))
        else:
            core = SiteCall(SiteName(name), tuple(lowered))
        for g, hexpr in reversed(hoists):
            core = Seq(hexpr, g, core)
        return core

    def parse_arg_list(self, scope: frozenset[str]) -> list[_ArgExpr]:
        self.expect("(")
        if self.peek().kind == ")":
            self.next()
            return []
        args = [self.parse_arg_expr(scope)]
        while self.peek().kind == ",":
            self.next()
            args.append(self.parse_arg_expr(scope))
        self.expect(")")
        return args

    # -- infix argument sublanguage

    def parse_arg_expr(self, scope: frozenset[str]) -> _ArgExpr:
        left = self.parse_arg_sum(scope)
        if self.peek().kind in _CMP_SITES:
            op = self.next().kind
            right = self.parse_arg_sum(scope)
            return _ABin(op, left, right)
        return left

    def parse_arg_sum(self, scope: frozenset[str]) -> _ArgExpr:
        left = self.parse_arg_product(scope)
        while self.peek().kind in _ADD_SITES:
            op = self.next().kind
            left = _ABin(op, left, self.parse_arg_product(scope))
        return left

    def parse_arg_product(self, scope: frozenset[str]) -> _ArgExpr:
        left = self.parse_arg_unary(scope)
        while self.peek().kind == "*":
            self.next()
            left = _ABin("*", left, self.parse_arg_unary(scope))
        return left

    def parse_arg_unary(self, scope: frozenset[str]) -> _ArgExpr:
        if self.peek().kind == "~":
            self.next()
            return _ANot(self.parse_arg_unary(scope))
        return self.parse_arg_primary(scope)

    def parse_arg_primary(self, scope: frozenset[str]) -> _ArgExpr:
        t = self.peek()
        base: _ArgExpr
        if t.kind == "nat":
            self.next()
            if self.peek().kind == "/" and self.peek(1).kind == "nat":
                self.next()
                den = int(self.next().text)
                if den == 0:
                    raise ParseError("zero denominator", t.line, t.col)
                base = _ALit(mk_num(Fraction(int(t.text), den)))
            else:
                base = _ALit(Int(int(t.text)))
        elif t.kind == "string":
            self.next()
            base = _ALit(Str(t.text))
        elif t.kind == "name" and t.text in RESERVED:
            self.next()
            base = _ALit(_reserved_const(t.text))
        elif t.kind == "name":
            name = self.next().text
            if self.peek().kind == "(":
                base = _ACall(name, name in scope, tuple(self.parse_arg_list(scope)))
            else:
                base = _AName(name, name in scope)
        elif t.kind == "(":
            self.next()
            base = self.parse_arg_expr(scope)
            self.expect(")")
        else:
            raise self.fail(f"expected an argument, found {t.text or 'end of input'!r}")
        while self.peek().kind == "." and self.peek(1).kind == "nat":
            self.next()
            base = _AProj(base, int(self.next().text))
        return base

    def lower_arg(self, a: _ArgExpr, scope: frozenset[str]) -> tuple[Arg, list[tuple[str, Expr]]]:
        """Flatten a compound argument into a variable plus hoisted calls.

        Each hoist `(g, e)` wraps the eventual call as `e >g> ...`; the
        built-in sites publish at most once, so the chain evaluates the
        argument exactly when it is defined.
        """
        match a:
            case _ALit(value):
                return Lit(value), []
            case _AName(name, is_var):
                return (Var(name) if is_var else SiteName(name)), []
            case _ABin(op, left, right):
                la, lh = self.lower_arg(left, scope)
                ra, rh = self.lower_arg(right, scope)
                if op in _CMP_SITES:
                    site, swap = _CMP_SITES[op]
                    pair = (ra, la) if swap else (la, ra)
                else:
                    site = _ADD_SITES[op] if op in _ADD_SITES else "mul"
                    pair = (la, ra)
                g = self.fresh()
                return Var(g), lh + rh + [(g, SiteCall(SiteName(site), pair))]
            case _ANot(inner):
                ia, ih = self.lower_arg(inner, scope)
                g = self.fresh()
                return Var(g), ih + [(g, SiteCall(SiteName("eq"), (ia, Lit(Bool(False)))))]
            case _AProj(inner, index):
                ia, ih = self.lower_arg(inner, scope)
                g = self.fresh()
                return Var(g), ih + [(g, SiteCall(SiteName("proj"), (Lit(Int(index)), ia)))]
            case _ACall(name, is_var, args):
                hoists: list[tuple[str, Expr]] = []
                lowered: list[Arg] = []
                for sub in args:
                    arg, hs = self.lower_arg(sub, scope)
                    hoists.extend(hs)
                    lowered.append(arg)
                if name in self.decls:
                    call: Expr = ExprCall(name, tuple(lowered))
                elif is_var:
                    call = SiteCall(Var(name), tuple(lowered))
                else:
                    call = SiteCall(SiteName(name), tuple(lowered))
                g = self.fresh()
                return Var(g), hoists + [(g, call)]
        raise AssertionError(a)


def _reserved_const(word: str) -> Const:
    return {"true": Bool(True), "false": Bool(False), "signal": Signal()}[word]


def _rebind(e: Expr, name: str) -> Expr:
    """Turn free SiteName(name) occurrences into Var(name)."""

    def fix(a: Arg) -> Arg:
        return Var(name) if isinstance(a, SiteName) and a.name == name else a

    match e:
        case SiteCall(target, args):
            return SiteCall(fix(target), tuple(fix(a) for a in args))
        case ExprCall(dname, args):
            return ExprCall(dname, tuple(fix(a) for a in args))
        case Par(l, r):
            return Par(_rebind(l, name), _rebind(r, name))
        case Seq(l, b, r):
            return Seq(_rebind(l, name), b, _rebind(r, name))
        case Where(l, b, r):
            return Where(_rebind(l, name), b, _rebind(r, name))
        case _:
            return e


# ---------------------------------------------------------------------------
# Entry points


def _split_decl_chunks(toks: list[Token]) -> list[list[Token]]:
    chunks: list[list[Token]] = []
    depth = 0
    cur: list[Token] = []
    for t in toks:
        if t.kind == "eof":
            break
        if t.kind == "(":
            depth += 1
        elif t.kind == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ')'", t.line, t.col)
        if t.kind == ";" and depth == 0:
            chunks.append(cur)
            cur = []
        else:
            cur.append(t)
    chunks.append(cur)
    return chunks


def parse_program(src: str) -> Program:
    """Parse declarations followed by a goal expression."""
    toks = tokenize(src)
    chunks = _split_decl_chunks(toks)
    decl_names: list[str] = []
    for chunk in chunks[:-1]:
        if not chunk or chunk[0].kind != "name":
            t = chunk[0] if chunk else toks[-1]
            raise ParseError("declaration must start with a name", t.line, t.col)
        if chunk[0].text in decl_names:
            raise ParseError(f"duplicate declaration {chunk[0].text!r}", chunk[0].line, chunk[0].col)
        decl_names.append(chunk[0].text)
    declset = frozenset(decl_names)

    decls: list[Decl] = []
    for chunk in chunks[:-1]:
        p = _Parser(chunk + [Token("eof", "", 0, 0)], declset)
        name = p.expect("name").text
        params: tuple[str, ...] = ()
        if p.peek().kind == "(":
            p.next()
            if p.peek().kind != ")":
                names = [p.parse_binder_name()]
                while p.peek().kind == ",":
                    p.next()
                    names.append(p.parse_binder_name())
                params = tuple(names)
            p.expect(")")
        if len(set(params)) != len(params):
            raise ParseError(f"duplicate parameter in {name!r}", chunk[0].line, chunk[0].col)
        t = p.next()
        if t.kind not in ("=def", ":="):
            raise ParseError(f"expected '=def' in declaration of {name!r}", t.line, t.col)
        body = p.parse_expr(frozenset(params))
        p.expect("eof")
        decls.append(Decl(name, params, body))

    main_chunk = chunks[-1]
    if not main_chunk:
        raise ParseError("missing goal expression", toks[-1].line, toks[-1].col)
    p = _Parser(main_chunk + [Token("eof", "", 0, 0)], declset)
    main = p.parse_expr(frozenset())
    p.expect("eof")
    return Program(tuple(decls), main)


def parse_expression(src: str, decls: Iterable[str] = (), scope: Iterable[str] = ()) -> Expr:
    """Parse a single expression; handy in tests and the CLI."""
    p = _Parser(tokenize(src), frozenset(decls))
    e = p.parse_expr(frozenset(scope))
    p.expect("eof")
    return e


# ---------------------------------------------------------------------------
# Printing


def _pp_arg(a: Arg) -> str:
    match a:
        case Var(name) | SiteName(name):
            return name
        case Lit(value):
            return const_str(value)
    raise TypeError(f"not an argument: {a!r}")


_LEVEL_WHERE, _LEVEL_PAR, _LEVEL_SEQ, _LEVEL_ATOM = 1, 2, 3, 4


def pretty(e: Expr) -> str:
    """Render a core term with minimal parentheses.

    Source-level terms reparse to an equal tree.  Runtime leaves and
    resolved site references render readably but are not parseable.
    """
    return _pp(e, _LEVEL_WHERE)


def _pp(e: Expr, level: int) -> str:
    match e:
        case Silent():
            s, mine = "0", _LEVEL_ATOM
        case SiteCall(target, args):
            s = f"{_pp_arg(target)}({', '.join(_pp_arg(a) for a in args)})"
            mine = _LEVEL_ATOM
        case ExprCall(name, args):
            s = f"{name}({', '.join(_pp_arg(a) for a in args)})"
            mine = _LEVEL_ATOM
        case Par(l, r):
            s = f"{_pp(l, _LEVEL_PAR)} | {_pp(r, _LEVEL_SEQ)}"
            mine = _LEVEL_PAR
        case Seq(l, b, r):
            s = f"{_pp(l, _LEVEL_ATOM)} >{b}> {_pp(r, _LEVEL_SEQ)}"
            mine = _LEVEL_SEQ
        case Where(l, b, r):
            s = f"{_pp(l, _LEVEL_WHERE)} <{b}< {_pp(r, _LEVEL_PAR)}"
            mine = _LEVEL_WHERE
        case _:
            s, mine = repr(e), _LEVEL_ATOM
    return f"({s})" if mine < level else s


def pretty_program(p: Program) -> str:
    parts = [f"{d.name}({', '.join(d.params)}) =def {pretty(d.body)} ;" for d in p.decls]
    parts.append(pretty(p.main))
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Scope analysis and substitution


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case SiteCall(target, args):
            return frozenset(a.name for a in (target, *args) if isinstance(a, Var))
        case ExprCall(_, args):
            return frozenset(a.name for a in args if isinstance(a, Var))
        case Par(l, r):
            return free_vars(l) | free_vars(r)
        case Seq(l, b, r):
            return free_vars(l) | (free_vars(r) - {b})
        case Where(l, b, r):
            return (free_vars(l) - {b}) | free_vars(r)
        case _:
            return frozenset()


def all_names(e: Expr) -> set[str]:
    """Every identifier occurring anywhere in the term."""
    out: set[str] = set()
    stack = [e]
    while stack:
        cur = stack.pop()
        match cur:
            case SiteCall(target, args):
                for a in (target, *args):
                    if isinstance(a, (Var, SiteName)):
                        out.add(a.name)
            case ExprCall(name, args):
                out.add(name)
                for a in args:
                    if isinstance(a, Var):
                        out.add(a.name)
            case Par(l, r):
                stack += [l, r]
            case Seq(l, b, r) | Where(l, b, r):
                out.add(b)
                stack += [l, r]
            case _:
                pass
    return out


def fresh_name(base: str, avoid: set[str]) -> str:
    if base not in avoid:
        return base
    n = 1
    while f"{base}_{n}" in avoid:
        n += 1
    return f"{base}_{n}"


def substitute(e: Expr, mapping: Mapping[str, Arg]) -> Expr:
    """Replace free variables by arguments, renaming binders on capture.

    When every replacement is a literal (the common case at runtime) no
    renaming can occur, and repeated substitution over the same term
    yields equal trees, which the state dedup in the analyzer relies on.
    """
    if not mapping:
        return e
    ground = all(isinstance(v, Lit) for v in mapping.values())
    return _subst(e, dict(mapping), ground)


def _subst_arg(a: Arg, m: Mapping[str, Arg]) -> Arg:
    if isinstance(a, Var) and a.name in m:
        return m[a.name]
    return a


def _subst(e: Expr, m: dict[str, Arg], ground: bool) -> Expr:
    match e:
        case SiteCall(target, args):
            return SiteCall(_subst_arg(target, m), tuple(_subst_arg(a, m) for a in args))
        case ExprCall(name, args):
            return ExprCall(name, tuple(_subst_arg(a, m) for a in args))
        case Par(l, r):
            return Par(_subst(l, m, ground), _subst(r, m, ground))
        case Seq(l, b, r):
            nl = _subst(l, m, ground)
            b2, nr = _subst_under(b, r, m, ground)
            return Seq(nl, b2, nr)
        case Where(l, b, r):
            nr = _subst(r, m, ground)
            b2, nl = _subst_under(b, l, m, ground)
            return Where(nl, b2, nr)
        case _:
            return e


def _subst_under(binder: str, body: Expr, m: dict[str, Arg], ground: bool) -> tuple[str, Expr]:
    inner = {k: v for k, v in m.items() if k != binder}
    if not inner:
        return binder, body
    if not ground:
        live = free_vars(body)
        inner = {k: v for k, v in inner.items() if k in live}
        if not inner:
            return binder, body
        captured = any(isinstance(v, Var) and v.name == binder for v in inner.values())
        if captured:
            avoid = all_names(body) | set(inner)
            for v in inner.values():
                if isinstance(v, (Var, SiteName)):
                    avoid.add(v.name)
            fresh = fresh_name(binder, avoid)
            body = _subst(body, {binder: Var(fresh)}, False)
            return fresh, _subst(body, inner, False)
    return binder, _subst(body, inner, ground)


# ---------------------------------------------------------------------------
# Static checks


def check_closed(prog: Program) -> None:
    """Reject unbound variables and bad expression calls.

    Programs built in code (rather than parsed) go through here before
    being run or explored.
    """
    arity = {}
    for d in prog.decls:
        if d.name in arity:
            raise ScopeError(f"duplicate declaration {d.name!r}")
        if len(set(d.params)) != len(d.params):
            raise ScopeError(f"duplicate parameter in {d.name!r}")
        arity[d.name] = len(d.params)

    def check(e: Expr, scope: frozenset[str], where: str) -> None:
        match e:
            case SiteCall(target, args):
                for a in (target, *args):
                    if isinstance(a, Var) and a.name not in scope:
                        raise ScopeError(f"unbound variable {a.name!r} in {where}")
            case ExprCall(name, args):
                if name not in arity:
                    raise ScopeError(f"call to undeclared expression {name!r} in {where}")
                if arity[name] != len(args):
                    raise ScopeError(
                        f"{name!r} takes {arity[name]} arguments, got {len(args)} in {where}"
                    )
                for a in args:
                    if isinstance(a, Var) and a.name not in scope:
                        raise ScopeError(f"unbound variable {a.name!r} in {where}")
            case Par(l, r):
                check(l, scope, where)
                check(r, scope, where)
            case Seq(l, b, r):
                check(l, scope, where)
                check(r, scope | {b}, where)
            case Where(l, b, r):
                check(l, scope | {b}, where)
                check(r, scope, where)
            case _:
                pass

    for d in prog.decls:
        check(d.body, frozenset(d.params), f"declaration {d.name!r}")
    check(prog.main, frozenset(), "goal expression")
