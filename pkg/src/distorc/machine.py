"""Per-node small-step engine for running expression trees.

A running expression is the source tree with three extra leaf forms:
a value nobody has consumed yet, a call waiting on a remote reply, and
an armed timer.  Steps that need no cooperation from the outside world
(unfolding, built-in calls, publish routing, zero timers) are "internal"
and this module runs them; a remote call or a top-level value surfaces
as an action the surrounding system must carry out.

Publish routing follows the combinator structure: a value climbs until
the nearest sequencing node whose left side produced it (spawning a
fresh instance of the right side), or the nearest pruning node whose
right side produced it (killing that side and binding the variable), or
the root, where it becomes an observable publication.  Parallel nodes
are transparent.

Everything here is functional: nodes and trees are immutable, steps
build new ones.  That is what makes state identity in the analyzer
cheap, so keep it that way.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from hashlib import blake2b
from typing import Hashable, Iterator, Mapping

from .sites import INTERNAL_SITES, FireLater, NeverReply, PublishNow, eval_internal
from .syntax import (
    Decl,
    ExprCall,
    Expr,
    Lit,
    Par,
    Program,
    Seq,
    SiteCall,
    SiteName,
    Silent,
    Where,
    check_closed,
    substitute,
)
from .timebase import INF, TimeInf
from .values import SIGNAL, Const, InternalSite, RemoteSite, TupleV

# ---------------------------------------------------------------------------
# Runtime leaves


@dataclass(frozen=True, slots=True)
class RPublish:
    """A value produced and not yet routed to its consumer."""

    value: Const


@dataclass(frozen=True, slots=True)
class RPending:
    """A call in flight; the handle ties the eventual reply back here."""

    handle: int


@dataclass(frozen=True, slots=True)
class RTimer:
    remaining: TimeInf
    value: Const


RExpr = Expr  # plus the three leaves above; traversals treat them as leaves


_SILENT = Silent()


# ---------------------------------------------------------------------------
# Actions surfaced to the surrounding system


@dataclass(frozen=True, slots=True)
class CallOut:
    handle: int
    target: RemoteSite
    payload: Const


@dataclass(frozen=True, slots=True)
class PublishOut:
    value: Const


Action = CallOut | PublishOut


class ZenoSuspicion(RuntimeError):
    """Internal stepping ran past its fuel; the program likely spins
    through unguarded recursion without consuming time."""


# ---------------------------------------------------------------------------
# Nodes

# Nodes are frozen dataclasses *without* slots so a lazily computed
# digest can be attached out-of-band; dataclasses.replace builds fresh
# instances with no cached digest, which keeps the cache safe.


@dataclass(frozen=True)
class Loc:
    host: str
    port: int

    def __repr__(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class ExprNode:
    """A node running one expression tree."""

    loc: Loc
    clock: Fraction
    expr: RExpr
    next_handle: int = 0


@dataclass(frozen=True)
class SiteNode:
    """A node serving one site behavior."""

    loc: Loc
    clock: Fraction
    behavior_name: str
    site_state: Hashable


Node = ExprNode | SiteNode


def node_digest(node: Node) -> int:
    """128-bit identity of a node, excluding its clock.

    Exploration always advances every clock in lock-step with global
    elapsed time, and elapsed time is part of the global state key, so
    dropping the clock here loses nothing and lets a node whose tree
    did not change keep its cached digest across ticks.
    """
    cached = getattr(node, "_digest_cache", None)
    if cached is not None:
        return cached
    if isinstance(node, ExprNode):
        key = f"E|{node.loc!r}|{node.next_handle}|{node.expr!r}"
    else:
        key = f"S|{node.loc!r}|{node.behavior_name}|{node.site_state!r}"
    d = int.from_bytes(blake2b(key.encode(), digest_size=16).digest(), "big")
    object.__setattr__(node, "_digest_cache", d)
    return d


def canon_expr(e: RExpr) -> tuple[str, dict[int, int]]:
    """Render a tree with call handles renumbered in traversal order.

    Two trees with the same rendering behave identically: absolute
    handle numbers only tie replies to leaves, so renaming both ends
    consistently changes nothing.  The returned map sends each real
    handle to its canonical number so sockets can be renamed to match.
    """
    alloc: dict[int, int] = {}
    parts: list[str] = []

    def walk(e: RExpr) -> None:
        match e:
            case RPublish(v):
                parts.append(f"P({v!r})")
            case RPending(h):
                parts.append(f"H{alloc.setdefault(h, len(alloc))}")
            case RTimer(remaining, v):
                parts.append(f"T({remaining},{v!r})")
            case Silent():
                parts.append("0")
            case SiteCall(target, args):
                parts.append(f"C({target!r};{args!r})")
            case ExprCall(name, args):
                parts.append(f"X({name};{args!r})")
            case Par(l, r):
                parts.append("(")
                walk(l)
                parts.append("|")
                walk(r)
                parts.append(")")
            case Seq(l, b, r):
                parts.append("(")
                walk(l)
                parts.append(f">{b}>")
                walk(r)
                parts.append(")")
            case Where(l, b, r):
                parts.append("(")
                walk(l)
                parts.append(f"<{b}<")
                walk(r)
                parts.append(")")
            case _:
                parts.append(repr(e))

    walk(e)
    return "".join(parts), alloc


# ---------------------------------------------------------------------------
# Name resolution


@dataclass(frozen=True)
class Defs:
    """Declarations with site names already resolved to references."""

    decls: Mapping[str, Decl]


class ResolveError(ValueError):
    pass


def internal_env() -> dict[str, Const]:
    return {name: InternalSite(name) for name in INTERNAL_SITES}


def resolve_expr(e: Expr, env: Mapping[str, Const]) -> Expr:
    def fix(a):
        if isinstance(a, SiteName):
            try:
                return Lit(env[a.name])
            except KeyError:
                raise ResolveError(f"unknown site {a.name!r}") from None
        return a

    match e:
        case SiteCall(target, args):
            return SiteCall(fix(target), tuple(fix(a) for a in args))
        case ExprCall(name, args):
            return ExprCall(name, tuple(fix(a) for a in args))
        case Par(l, r):
            return Par(resolve_expr(l, env), resolve_expr(r, env))
        case Seq(l, b, r):
            return Seq(resolve_expr(l, env), b, resolve_expr(r, env))
        case Where(l, b, r):
            return Where(resolve_expr(l, env), b, resolve_expr(r, env))
        case _:
            return e


def build_defs(prog: Program, site_env: Mapping[str, Const]) -> tuple[Defs, Expr]:
    """Check a program and resolve every site name, internals included."""
    check_closed(prog)
    env = internal_env()
    env.update(site_env)
    decls = {
        d.name: Decl(d.name, d.params, normalize(resolve_expr(d.body, env))) for d in prog.decls
    }
    return Defs(decls), normalize(resolve_expr(prog.main, env))


# ---------------------------------------------------------------------------
# Structural normalization

# These are identities of the calculus, applied eagerly rather than
# treated as steps: dead branches disappear the moment they arise.  A
# pruning node keeps running as long as either side is alive; its right
# side may still be mid-call even when the left is dead.


def normalize(e: RExpr) -> RExpr:
    match e:
        case Par(l, r):
            nl, nr = normalize(l), normalize(r)
            if isinstance(nl, Silent):
                return nr
            if isinstance(nr, Silent):
                return nl
            return e if nl is l and nr is r else Par(nl, nr)
        case Seq(l, b, r):
            nl = normalize(l)
            if isinstance(nl, Silent):
                return _SILENT
            return e if nl is l else Seq(nl, b, r)
        case Where(l, b, r):
            nl, nr = normalize(l), normalize(r)
            if isinstance(nl, Silent) and isinstance(nr, Silent):
                return _SILENT
            return e if nl is l and nr is r else Where(nl, b, nr)
        case _:
            return e


# ---------------------------------------------------------------------------
# Internal steps


@dataclass(frozen=True)
class _Out:
    tree: RExpr
    actions: tuple[Action, ...]
    used_handles: int
    published: Const | None = None  # climbing value not yet consumed


def _ground_args(target: Lit, args: tuple, clock: Fraction, handle: int) -> _Out | None:
    vals = tuple(a.value for a in args)
    match target.value:
        case InternalSite(name):
            out = eval_internal(name, vals, clock)
            match out:
                case PublishNow(v):
                    return _Out(RPublish(v), (), 0)
                case FireLater(d, v):
                    return _Out(RTimer(d, v), (), 0)
                case NeverReply():
                    return _Out(_SILENT, (), 0)
        case RemoteSite() as ref:
            # No arguments sends a bare signal: the wire format has no
            # empty tuple, and "call me with no data" is what it means.
            if not vals:
                payload: Const = SIGNAL
            elif len(vals) == 1:
                payload = vals[0]
            else:
                payload = TupleV(vals)
            return _Out(RPending(handle), (CallOut(handle, ref, payload),), 1)
    # Calling a non-site value goes nowhere.
    return _Out(_SILENT, (), 0)


def _redexes(e: RExpr, defs: Defs, clock: Fraction, handle: int) -> Iterator[_Out]:
    """Yield one successor per enabled redex, leftmost-innermost first."""
    match e:
        case RPublish(v):
            yield _Out(_SILENT, (), 0, v)
        case RTimer(remaining, v) if remaining.is_zero:
            yield _Out(_SILENT, (), 0, v)
        case ExprCall(name, args):
            d = defs.decls[name]
            body = substitute(d.body, dict(zip(d.params, args)))
            yield _Out(body, (), 0)
        case SiteCall(target, args):
            if isinstance(target, Lit) and all(isinstance(a, Lit) for a in args):
                out = _ground_args(target, args, clock, handle)
                if out is not None:
                    yield out
        case Par(l, r):
            for o in _redexes(l, defs, clock, handle):
                yield replace(o, tree=Par(o.tree, r))
            for o in _redexes(r, defs, clock, handle):
                yield replace(o, tree=Par(l, o.tree))
        case Seq(l, b, r):
            for o in _redexes(l, defs, clock, handle):
                if o.published is not None:
                    inst = substitute(r, {b: Lit(o.published)})
                    yield _Out(Par(inst, Seq(o.tree, b, r)), o.actions, o.used_handles)
                else:
                    yield replace(o, tree=Seq(o.tree, b, r))
        case Where(l, b, r):
            for o in _redexes(l, defs, clock, handle):
                yield replace(o, tree=Where(o.tree, b, r))
            for o in _redexes(r, defs, clock, handle):
                if o.published is not None:
                    # First value from the right side: bind it and drop
                    # the whole right branch, in-flight calls included.
                    yield _Out(substitute(l, {b: Lit(o.published)}), o.actions, o.used_handles)
                else:
                    yield replace(o, tree=Where(l, b, o.tree))
        case _:
            return


def _finish(node: ExprNode, o: _Out) -> tuple[ExprNode, tuple[Action, ...]]:
    actions = o.actions
    if o.published is not None:
        # Nothing consumed the value on the way up: it is observable.
        actions = actions + (PublishOut(o.published),)
    new = ExprNode(node.loc, node.clock, normalize(o.tree), node.next_handle + o.used_handles)
    return new, actions


def step_once(defs: Defs, node: ExprNode) -> tuple[ExprNode, tuple[Action, ...]] | None:
    """The unique deterministic internal step, or None at quiescence."""
    for o in _redexes(node.expr, defs, node.clock, node.next_handle):
        return _finish(node, o)
    return None


def step_all(defs: Defs, node: ExprNode) -> list[tuple[ExprNode, tuple[Action, ...]]]:
    """Every enabled internal step; the exhaustive-interleaving view."""
    return [_finish(node, o) for o in _redexes(node.expr, defs, node.clock, node.next_handle)]


def run_quiescent(
    defs: Defs, node: ExprNode, fuel: int = 100_000
) -> tuple[ExprNode, tuple[Action, ...]]:
    """Run deterministic internal steps until none is enabled."""
    actions: list[Action] = []
    for _ in range(fuel):
        stepped = step_once(defs, node)
        if stepped is None:
            return node, tuple(actions)
        node, acts = stepped
        actions.extend(acts)
    raise ZenoSuspicion(f"no quiescence after {fuel} steps at {node.loc!r}")


# ---------------------------------------------------------------------------
# External events


def _replace_pending(e: RExpr, handle: int, by: RExpr) -> RExpr | None:
    """Swap the pending leaf for `by`; None when the handle is gone."""
    match e:
        case RPending(h) if h == handle:
            return by
        case Par(l, r) | Seq(l, _, r) | Where(l, _, r):
            nl = _replace_pending(l, handle, by)
            if nl is not None:
                return replace(e, left=nl)
            # Sequencing right sides have not started, but scanning them
            # is harmless: no pending leaf can occur there.
            nr = _replace_pending(r, handle, by)
            if nr is not None:
                return replace(e, right=nr)
            return None
        case _:
            return None


def deliver_return(node: ExprNode, handle: int, value: Const) -> ExprNode | None:
    """Hand a reply to its waiting call.

    Returns None for a stale handle (the call was pruned away); the
    caller drops the reply, which is exactly what the semantics wants.
    """
    ne = _replace_pending(node.expr, handle, RPublish(value))
    if ne is None:
        return None
    return replace(node, expr=ne)


def fail_pending(node: ExprNode, handle: int) -> ExprNode | None:
    """A call's transport failed: the call will never return."""
    ne = _replace_pending(node.expr, handle, _SILENT)
    if ne is None:
        return None
    return replace(node, expr=normalize(ne))


def pending_handles(e: RExpr) -> frozenset[int]:
    match e:
        case RPending(h):
            return frozenset((h,))
        case Par(l, r) | Seq(l, _, r) | Where(l, _, r):
            return pending_handles(l) | pending_handles(r)
        case _:
            return frozenset()


# ---------------------------------------------------------------------------
# Time


def node_mte(node: Node) -> TimeInf:
    """Longest advance this node tolerates before a timer must fire."""
    if isinstance(node, SiteNode):
        return INF

    def walk(e: RExpr) -> TimeInf:
        match e:
            case RTimer(remaining, _):
                return remaining
            case Par(l, r):
                return min(walk(l), walk(r))
            case Seq(l, _, _):
                return walk(l)
            case Where(l, _, r):
                return min(walk(l), walk(r))
            case _:
                return INF

    return walk(node.expr)


def node_delta(node: Node, d: TimeInf) -> Node:
    """Advance this node's clock by finite d, running timers down."""
    df = d.as_fraction()
    if isinstance(node, SiteNode):
        return replace(node, clock=node.clock + df)

    def walk(e: RExpr) -> RExpr:
        match e:
            case RTimer(remaining, v):
                return RTimer(remaining.monus(d), v)
            case Par(l, r):
                return Par(walk(l), walk(r))
            case Seq(l, b, r):
                return Seq(walk(l), b, r)
            case Where(l, b, r):
                return Where(walk(l), b, walk(r))
            case _:
                return e

    return ExprNode(node.loc, node.clock + df, walk(node.expr), node.next_handle)
