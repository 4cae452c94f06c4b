"""Seeded random generators shared across the test suite.

These run off plain random.Random so the acceptance checks can do
large fixed-seed batches without hypothesis overhead; the hypothesis
suites layer their own strategies where shrinking matters.
"""
from __future__ import annotations

import random
import string
from fractions import Fraction

from distorc.ltl import (
    Always,
    And,
    Eventually,
    FF,
    Formula,
    Implies,
    Not,
    Or,
    Prop,
    TT,
    Until,
)
from distorc.syntax import (
    Arg,
    Expr,
    ExprCall,
    Lit,
    Par,
    Seq,
    SiteCall,
    SiteName,
    Silent,
    Var,
    Where,
)
from distorc.values import (
    Bool,
    Const,
    Int,
    InternalSite,
    RemoteSite,
    Signal,
    Str,
    TupleV,
    mk_num,
)

# Name pools are pairwise disjoint so a printed term never reparses a
# site name as a declaration or a bound variable.
DECL_POOL = ("Copy", "Twice")
SITE_POOL = ("let", "add", "gt", "Probe", "Relay")
BINDER_POOL = ("u", "v", "w", "y")

_TEXT_ALPHABET = string.ascii_letters + string.digits + ' \\"\n._-'


def gen_text(rng: random.Random, maxlen: int = 8) -> str:
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(rng.randrange(maxlen + 1)))


def gen_source_const(rng: random.Random) -> Const:
    """A constant expressible as a literal in program text."""
    match rng.randrange(6):
        case 0:
            return Signal()
        case 1:
            return Bool(rng.random() < 0.5)
        case 2:
            return Int(rng.randrange(1000))
        case 3:
            return mk_num(Fraction(rng.randrange(1, 60), rng.randrange(1, 12)))
        case 4:
            return Str(gen_text(rng))
        case _:
            return Int(rng.randrange(3))


def gen_wire_const(rng: random.Random, depth: int = 2) -> Const:
    """Anything the wire format can carry, tuples and site values included."""
    top = 8 if depth > 0 else 6
    match rng.randrange(top):
        case 6:
            n = rng.randrange(1, 4)
            return TupleV(tuple(gen_wire_const(rng, depth - 1) for _ in range(n)))
        case 7:
            if rng.random() < 0.5:
                return InternalSite(rng.choice(("let", "add", "clock", "rtimer")))
            return RemoteSite(gen_text(rng, 12), rng.randrange(1, 65536), rng.randrange(6))
        case _:
            return gen_source_const(rng)


def _gen_arg(rng: random.Random, scope: tuple[str, ...]) -> Arg:
    r = rng.randrange(6)
    if r == 0 and scope:
        return Var(rng.choice(scope))
    if r == 1:
        return SiteName(rng.choice(SITE_POOL))
    return Lit(gen_source_const(rng))


def _gen_call(rng: random.Random, scope: tuple[str, ...]) -> Expr:
    args = tuple(_gen_arg(rng, scope) for _ in range(rng.randrange(3)))
    k = rng.randrange(4)
    if k == 0:
        return ExprCall(rng.choice(DECL_POOL), args)
    if k == 1 and scope:
        return SiteCall(Var(rng.choice(scope)), args)
    return SiteCall(SiteName(rng.choice(SITE_POOL)), args)


def gen_core_expr(rng: random.Random, scope: tuple[str, ...] = (), depth: int = 4) -> Expr:
    """A well-scoped core term; every Var is bound or drawn from `scope`."""
    if depth <= 0 or rng.random() < 0.4:
        if rng.random() < 0.1:
            return Silent()
        return _gen_call(rng, scope)
    k = rng.randrange(3)
    if k == 0:
        return Par(gen_core_expr(rng, scope, depth - 1), gen_core_expr(rng, scope, depth - 1))
    b = rng.choice(BINDER_POOL)
    inner = tuple(dict.fromkeys(scope + (b,)))
    if k == 1:
        return Seq(gen_core_expr(rng, scope, depth - 1), b, gen_core_expr(rng, inner, depth - 1))
    return Where(gen_core_expr(rng, inner, depth - 1), b, gen_core_expr(rng, scope, depth - 1))


def gen_formula(rng: random.Random, props: tuple[Prop, ...], depth: int = 4) -> Formula:
    if depth <= 0 or rng.random() < 0.35:
        r = rng.randrange(8)
        if r == 0:
            return TT()
        if r == 1:
            return FF()
        return rng.choice(props)
    sub = depth - 1
    match rng.randrange(7):
        case 0:
            return Not(gen_formula(rng, props, sub))
        case 1:
            return And(gen_formula(rng, props, sub), gen_formula(rng, props, sub))
        case 2:
            return Or(gen_formula(rng, props, sub), gen_formula(rng, props, sub))
        case 3:
            return Implies(gen_formula(rng, props, sub), gen_formula(rng, props, sub))
        case 4:
            return Always(gen_formula(rng, props, sub))
        case 5:
            return Eventually(gen_formula(rng, props, sub))
        case _:
            return Until(gen_formula(rng, props, sub), gen_formula(rng, props, sub))


def gen_lasso_word(
    rng: random.Random, keys: tuple[str, ...], max_len: int = 6
) -> tuple[list[frozenset[str]], int]:
    """A finite word plus a loop-back index, for lasso-path evaluation."""
    n = rng.randrange(1, max_len + 1)
    word = [
        frozenset(k for k in keys if rng.random() < 0.5)
        for _ in range(n)
    ]
    return word, rng.randrange(n)
