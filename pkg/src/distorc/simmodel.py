"""Analyzable model of a distributed deployment: processes, abstract
sockets, nondeterministic delays, and a global clock.

The state is a tuple of per-node engines plus the socket plumbing
between them.  A remote call turns into a connect request, then a
frame in flight toward the server, then (once the site's behavior
answers) a frame in flight back toward the caller; delivery of the
reply closes the socket.  Exactly two things branch the state space:
which delay a frame experiences (one successor per member of the delay
set) and whether a connect succeeds or fails.  Everything else is
deterministic and gets fused into the enclosing transition.

`successors` is the fused production relation used by the analyzer;
`raw_successors` exposes every micro-step individually (one rule
application per successor) and exists so tests can compare the fused
relation against an independent enumeration.

Time advances only when nothing instantaneous is left to do, and then
by the largest amount that wakes exactly the next event.  Within one
instant, a node's own steps (timers included) run before any newly
arrived frame is handed to it; a reply that lands in the same instant
as a timeout therefore loses the race.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from hashlib import blake2b

from .machine import (
    CallOut,
    Defs,
    ExprNode,
    Node,
    PublishOut,
    SiteNode,
    ZenoSuspicion,
    canon_expr,
    deliver_return,
    fail_pending,
    node_delta,
    node_digest,
    node_mte,
    run_quiescent,
    step_all,
    step_once,
)
from .sites import Reply, behavior
from .timebase import INF, TimeInf, min_time
from .values import Const, RemoteSite, const_str

# ---------------------------------------------------------------------------
# State


@dataclass(frozen=True)
class ServerSock:
    sid: int
    host: str
    port: int
    owner: int  # pid


@dataclass(frozen=True)
class SrvReq:
    """A pending server-socket creation request (consumed during setup)."""

    pid: int
    port: int


@dataclass(frozen=True)
class CreateReq:
    """A connect request emitted by a remote call, not yet resolved."""

    pid: int
    handle: int
    target: RemoteSite
    payload: Const


@dataclass(frozen=True)
class ErrRec:
    """A connect failure; kept forever as evidence for error predicates."""

    pid: int
    handle: int


# One client socket's progress through the call protocol.  Send stages
# hold a frame that has not been matched with the peer's receive yet
# (that matching is where the delay choice happens); flight stages hold
# a delayed frame; Held means the server consumed the call and has not
# answered yet.


@dataclass(frozen=True)
class CallSend:
    payload: Const


@dataclass(frozen=True)
class CallFlight:
    payload: Const
    remaining: TimeInf


@dataclass(frozen=True)
class Held:
    pass


@dataclass(frozen=True)
class ReplySend:
    value: Const


@dataclass(frozen=True)
class ReplyFlight:
    value: Const
    remaining: TimeInf


Stage = CallSend | CallFlight | Held | ReplySend | ReplyFlight


@dataclass(frozen=True)
class Sock:
    sid: int
    client: int  # pid
    handle: int
    server: int  # pid
    stage: Stage


@dataclass(frozen=True)
class GlobalState:
    procs: tuple[Node, ...]  # pid = index
    servers: tuple[ServerSock, ...]
    srv_reqs: tuple[SrvReq, ...]
    creates: tuple[CreateReq, ...]
    stalled: tuple[CreateReq, ...]  # connects to addresses nobody serves
    socks: tuple[Sock, ...]
    errors: tuple[ErrRec, ...]
    counter: int
    elapsed: Fraction


@dataclass(frozen=True)
class Context:
    """Per-system constants that never change along a trace."""

    defs: Defs
    ds: tuple[TimeInf, ...]  # sorted delay set
    explore_errors: bool = True
    fuel: int = 100_000


@dataclass(frozen=True)
class Label:
    """What a transition did: its kind, a short detail, elapsed time,
    and any log lines produced while fusing the instantaneous tail."""

    kind: str
    detail: str
    dt: Fraction
    logs: tuple[str, ...] = ()


def make_context(
    defs: Defs, ds, explore_errors: bool = True, fuel: int = 100_000
) -> Context:
    dss = tuple(sorted(set(ds)))
    if not dss:
        raise ValueError("delay set must be nonempty")
    return Context(defs, dss, explore_errors, fuel)


def new_system(procs: tuple[Node, ...], srv_reqs: tuple[SrvReq, ...]) -> GlobalState:
    return GlobalState(procs, (), srv_reqs, (), (), (), (), 0, Fraction(0))


# ---------------------------------------------------------------------------
# Small helpers


def _set_proc(st: GlobalState, pid: int, node: Node) -> GlobalState:
    procs = st.procs[:pid] + (node,) + st.procs[pid + 1 :]
    return replace(st, procs=procs)


def _set_sock(st: GlobalState, sock: Sock) -> GlobalState:
    socks = tuple(sock if s.sid == sock.sid else s for s in st.socks)
    return replace(st, socks=socks)


def _drop_sock(st: GlobalState, sid: int) -> GlobalState:
    return replace(st, socks=tuple(s for s in st.socks if s.sid != sid))


def find_server(st: GlobalState, host: str, port: int) -> int | None:
    for srv in st.servers:
        if srv.host == host and srv.port == port:
            return srv.owner
    return None


# ---------------------------------------------------------------------------
# Socket rules


def apply_create_server(st: GlobalState) -> GlobalState:
    """Resolve the oldest pending server-socket request.

    Server creation never fails in this model, so this is deterministic
    bookkeeping normally run to exhaustion during system setup.
    """
    if not st.srv_reqs:
        return st
    req, rest = st.srv_reqs[0], st.srv_reqs[1:]
    owner = st.procs[req.pid]
    srv = ServerSock(st.counter, owner.loc.host, req.port, req.pid)
    return replace(
        st, srv_reqs=rest, servers=st.servers + (srv,), counter=st.counter + 1
    )


def init_servers(st: GlobalState) -> GlobalState:
    while st.srv_reqs:
        st = apply_create_server(st)
    return st


def _create_success(st: GlobalState, idx: int, server_pid: int) -> GlobalState:
    req = st.creates[idx]
    sock = Sock(st.counter, req.pid, req.handle, server_pid, CallSend(req.payload))
    return replace(
        st,
        creates=st.creates[:idx] + st.creates[idx + 1 :],
        socks=st.socks + (sock,),
        counter=st.counter + 1,
    )


def _create_fail(st: GlobalState, idx: int) -> GlobalState:
    req = st.creates[idx]
    st = replace(
        st,
        creates=st.creates[:idx] + st.creates[idx + 1 :],
        errors=st.errors + (ErrRec(req.pid, req.handle),),
    )
    node = st.procs[req.pid]
    if isinstance(node, ExprNode):
        failed = fail_pending(node, req.handle)
        if failed is not None:
            st = _set_proc(st, req.pid, failed)
    return st


def client_socket_successors(ctx: Context, st: GlobalState, idx: int) -> list[GlobalState]:
    """Both outcomes of the oldest (or given) connect request."""
    req = st.creates[idx]
    spid = find_server(st, req.target.host, req.target.port)
    if spid is None:
        # Nobody serves that address: the request blocks forever.
        return [
            replace(
                st,
                creates=st.creates[:idx] + st.creates[idx + 1 :],
                stalled=st.stalled + (req,),
            )
        ]
    out = [_create_success(st, idx, spid)]
    if ctx.explore_errors:
        out.append(_create_fail(st, idx))
    return out


def exchange_successors(ctx: Context, st: GlobalState, sid: int) -> list[GlobalState]:
    """Match a pending frame with its peer's receive: one successor per
    delay in the delay set.  An infinite delay is a lost message."""
    sock = next(s for s in st.socks if s.sid == sid)
    out = []
    for d in ctx.ds:
        match sock.stage:
            case CallSend(payload):
                out.append(_set_sock(st, replace(sock, stage=CallFlight(payload, d))))
            case ReplySend(value):
                out.append(_set_sock(st, replace(sock, stage=ReplyFlight(value, d))))
            case _:
                raise ValueError(f"socket {sid} has nothing to send")
    return out


def _surface_call(ctx: Context, st: GlobalState, sock: Sock) -> tuple[GlobalState, tuple[str, ...]]:
    """A call frame reaches the server: run the site behavior."""
    assert isinstance(sock.stage, CallFlight)
    node = st.procs[sock.server]
    if not isinstance(node, SiteNode):
        return _drop_sock(st, sock.sid), (f"frame for non-site at {node.loc!r} dropped",)
    beh = behavior(node.behavior_name)
    new_state, replies, logs = beh.handle(node.site_state, sock.sid, sock.stage.payload)
    st = _set_proc(st, sock.server, replace(node, site_state=new_state))
    st = _set_sock(st, replace(sock, stage=Held()))
    for r in replies:
        st = _reply_on(st, r)
    return st, logs


def _reply_on(st: GlobalState, r: Reply) -> GlobalState:
    target = next((s for s in st.socks if s.sid == r.token), None)
    if target is None or not isinstance(target.stage, Held):
        raise ValueError(f"behavior answered token {r.token} with no held call")
    return _set_sock(st, replace(target, stage=ReplySend(r.value)))


def apply_close(st: GlobalState, sid: int) -> GlobalState | None:
    """Deliver a fully transferred reply and tear the socket down.

    Closing is instantaneous bookkeeping: the client learns the
    response is complete from the close itself.  A reply whose call was
    pruned away in the meantime is dropped on the floor, which is the
    behavior the calculus asks for.  Returns None when `sid` is gone.
    """
    sock = next((s for s in st.socks if s.sid == sid), None)
    if sock is None:
        return None
    assert isinstance(sock.stage, ReplyFlight)
    st = _drop_sock(st, sid)
    node = st.procs[sock.client]
    if isinstance(node, ExprNode):
        delivered = deliver_return(node, sock.handle, sock.stage.value)
        if delivered is not None:
            st = _set_proc(st, sock.client, delivered)
    return st


# ---------------------------------------------------------------------------
# Node-step fallout


def _apply_actions(
    st: GlobalState, pid: int, node: ExprNode, actions, logs: list[str]
) -> GlobalState:
    st = _set_proc(st, pid, node)
    for act in actions:
        match act:
            case CallOut(handle, target, payload):
                st = replace(st, creates=st.creates + (CreateReq(pid, handle, target, payload),))
            case PublishOut(value):
                logs.append(f"publish {const_str(value)} at {node.loc!r}")
    return st


# ---------------------------------------------------------------------------
# The fused relation


def _drive(ctx: Context, st: GlobalState, logs: list[str]) -> tuple[GlobalState, str | None, int]:
    """Run deterministic work to a fixpoint.

    Returns (state, pending_choice, index) where pending_choice is None
    when the state is closed, "create" when a connect must branch, or
    "delay" when a frame exchange must branch; index locates the
    request or socket concerned.
    """
    for _ in range(ctx.fuel):
        # Internal node steps, then frames that are due, repeatedly:
        # a node always finishes its own instant (timers included)
        # before a newly arrived frame is handed to it.
        progressed = False
        while True:
            inner = False
            for pid, node in enumerate(st.procs):
                if isinstance(node, ExprNode):
                    node2, actions = run_quiescent(ctx.defs, node, ctx.fuel)
                    if node2 is not node or actions:
                        st = _apply_actions(st, pid, node2, actions, logs)
                        inner = True
            due = next(
                (
                    s
                    for s in st.socks
                    if isinstance(s.stage, (CallFlight, ReplyFlight)) and s.stage.remaining.is_zero
                ),
                None,
            )
            if due is not None:
                if isinstance(due.stage, CallFlight):
                    st, lg = _surface_call(ctx, st, due)
                    logs.extend(lg)
                else:
                    st2 = apply_close(st, due.sid)
                    assert st2 is not None
                    st = st2
                inner = True
            if not inner:
                break
            progressed = True

        if st.creates:
            spid = find_server(st, st.creates[0].target.host, st.creates[0].target.port)
            if spid is None:
                st = replace(
                    st,
                    creates=st.creates[1:],
                    stalled=st.stalled + (st.creates[0],),
                )
                continue
            if ctx.explore_errors:
                return st, "create", 0
            st = _create_success(st, 0, spid)
            continue

        sendable = next(
            (s for s in st.socks if isinstance(s.stage, (CallSend, ReplySend))), None
        )
        if sendable is not None:
            if len(ctx.ds) == 1:
                st = exchange_successors(ctx, st, sendable.sid)[0]
                continue
            return st, "delay", sendable.sid

        if not progressed:
            return st, None, 0
    raise ZenoSuspicion("instantaneous work did not settle; suspected unguarded recursion")


def close(ctx: Context, st: GlobalState) -> list[tuple[GlobalState, tuple[str, ...]]]:
    """All maximally fused states reachable without time passing."""
    out: list[tuple[GlobalState, tuple[str, ...]]] = []
    stack: list[tuple[GlobalState, tuple[str, ...]]] = [(st, ())]
    while stack:
        cur, logs = stack.pop()
        loglist = list(logs)
        cur, choice, which = _drive(ctx, cur, loglist)
        logs = tuple(loglist)
        if choice is None:
            out.append((cur, logs))
        elif choice == "create":
            alts = client_socket_successors(ctx, cur, which)
            for alt in reversed(alts):
                stack.append((alt, logs))
        else:
            alts = exchange_successors(ctx, cur, which)
            for alt in reversed(alts):
                stack.append((alt, logs))
    return out


# ---------------------------------------------------------------------------
# Time


def eager_enabled(ctx: Context, st: GlobalState) -> bool:
    """True when any instantaneous rule applies (so time must not pass)."""
    if st.creates or st.srv_reqs:
        return True
    for s in st.socks:
        match s.stage:
            case CallSend() | ReplySend():
                return True
            case (CallFlight(_, r) | ReplyFlight(_, r)) if r.is_zero:
                return True
    for node in st.procs:
        if isinstance(node, ExprNode) and step_once(ctx.defs, node) is not None:
            return True
    return False


def sys_mte(st: GlobalState) -> TimeInf:
    """Largest time advance that skips no event."""
    times = [node_mte(n) for n in st.procs]
    for s in st.socks:
        match s.stage:
            case CallFlight(_, r) | ReplyFlight(_, r):
                times.append(r)
    return min_time(times)


def sys_delta(st: GlobalState, d: TimeInf) -> GlobalState:
    procs = tuple(node_delta(n, d) for n in st.procs)
    socks = []
    for s in st.socks:
        match s.stage:
            case CallFlight(p, r):
                socks.append(replace(s, stage=CallFlight(p, r.monus(d))))
            case ReplyFlight(v, r):
                socks.append(replace(s, stage=ReplyFlight(v, r.monus(d))))
            case _:
                socks.append(s)
    return replace(st, procs=procs, socks=tuple(socks), elapsed=st.elapsed + d.as_fraction())


def global_tick(ctx: Context, st: GlobalState, max_dt: TimeInf = INF) -> GlobalState | None:
    """Advance time maximally (clamped to max_dt), or None if time may
    not pass: instantaneous work remains, the next event is beyond any
    finite horizon, or the clamp is zero."""
    if eager_enabled(ctx, st):
        return None
    mte = sys_mte(st)
    if mte.is_inf:
        return None  # terminal: nothing will ever fire
    dt = min(mte, max_dt)
    if dt.is_zero:
        return None
    return sys_delta(st, dt)


def successors(
    ctx: Context, st: GlobalState, max_dt: TimeInf = INF
) -> list[tuple[Label, GlobalState]]:
    """Fused successors of a closed state: one tick, then re-closure.

    The input must be closed (as produced by `close`), so the eager
    check is skipped.  Returns [] for terminal states (nothing will
    ever happen again) and at the horizon (max_dt zero); a positive
    max_dt below the next event time yields a partial advance, so
    bounded exploration lands exactly on the bound.
    """
    mte = sys_mte(st)
    if mte.is_inf:
        return []  # terminal: nothing will ever fire, however long we wait
    dt = min(mte, max_dt)
    if dt.is_zero:
        return []
    ticked = sys_delta(st, dt)
    out = []
    for closed_st, logs in close(ctx, ticked):
        out.append((Label("tick", f"+{dt}", dt.as_fraction(), logs), closed_st))
    return out


# ---------------------------------------------------------------------------
# The raw relation (one rule application per successor)


def raw_successors(ctx: Context, st: GlobalState) -> list[tuple[Label, GlobalState]]:
    """Every single-rule successor, no fusion: the exhaustive view.

    Instantaneous rules are: one internal step of one node, resolving
    one connect request (both outcomes), exchanging one pending frame
    (every delay), or delivering one due frame.  When none applies,
    time advances by the maximal step.
    """
    out: list[tuple[Label, GlobalState]] = []
    zero = Fraction(0)
    for pid, node in enumerate(st.procs):
        if isinstance(node, ExprNode):
            for node2, actions in step_all(ctx.defs, node):
                logs: list[str] = []
                st2 = _apply_actions(st, pid, node2, actions, logs)
                out.append((Label("internal", f"pid{pid}", zero, tuple(logs)), st2))
    for idx in range(len(st.creates)):
        for st2 in client_socket_successors(ctx, st, idx):
            out.append((Label("connect", f"handle{st.creates[idx].handle}", zero), st2))
    for s in st.socks:
        match s.stage:
            case CallSend() | ReplySend():
                for st2 in exchange_successors(ctx, st, s.sid):
                    out.append((Label("exchange", f"sock{s.sid}", zero), st2))
            case CallFlight(_, r) if r.is_zero:
                st2, lg = _surface_call(ctx, st, s)
                out.append((Label("deliver", f"sock{s.sid}", zero, lg), st2))
            case ReplyFlight(_, r) if r.is_zero:
                st2 = apply_close(st, s.sid)
                assert st2 is not None
                out.append((Label("deliver", f"sock{s.sid}", zero), st2))
    if out:
        return out
    dt = sys_mte(st)
    if dt.is_inf or dt.is_zero:
        return []
    return [(Label("tick", f"+{dt}", dt.as_fraction()), sys_delta(st, dt))]


# ---------------------------------------------------------------------------
# State identity


def state_digest(st: GlobalState) -> int:
    """Structural identity: equal digests mean equal states, counters
    and history included.  Used where exact identity matters."""
    cached = getattr(st, "_digest_cache", None)
    if cached is not None:
        return cached
    parts = [
        repr(st.elapsed),
        str(st.counter),
        repr(st.errors),
        repr(st.creates),
        repr(st.stalled),
        repr(st.servers),
        repr(st.srv_reqs),
        repr(st.socks),
    ]
    parts.extend(format(node_digest(n), "032x") for n in st.procs)
    d = int.from_bytes(blake2b("|".join(parts).encode(), digest_size=16).digest(), "big")
    object.__setattr__(st, "_digest_cache", d)
    return d


def canonical_digest(st: GlobalState) -> int:
    """Identity up to observational equivalence, for exploration dedup.

    States that agree here have identical futures and predicate values:
    handle and socket numbers are renamed to allocation order (absolute
    values only link replies to waiting leaves), allocation counters
    and dead connect requests are dropped, failure records collapse to
    the one bit predicates can see, and site behaviors contribute their
    own canonical form.  Clocks stay out for the usual reason: they all
    equal the elapsed time, which is part of the key.
    """
    cached = getattr(st, "_canon_cache", None)
    if cached is not None:
        return cached
    handle_maps: dict[int, dict[int, int]] = {}
    parts = [str(st.elapsed), "E" if st.errors else "-", repr(st.srv_reqs)]
    parts.extend(f"v:{s.host}:{s.port}:{s.owner}" for s in sorted(
        st.servers, key=lambda s: (s.host, s.port)))
    site_pids: list[int] = []
    for pid, node in enumerate(st.procs):
        if isinstance(node, ExprNode):
            text, alloc = canon_expr(node.expr)
            handle_maps[pid] = alloc
            parts.append(f"e{pid}:{text}")
        else:
            site_pids.append(pid)

    sid_map = {s.sid: i for i, s in enumerate(st.socks)}

    def canon_handle(pid: int, h: int) -> str:
        got = handle_maps.get(pid, {}).get(h)
        return "dead" if got is None else str(got)

    for i, s in enumerate(st.socks):
        parts.append(
            f"k{i}:{s.client}/{canon_handle(s.client, s.handle)}>{s.server}:{_canon_stage(s.stage)}"
        )
    for c in st.creates:
        parts.append(
            f"q:{c.pid}/{canon_handle(c.pid, c.handle)}>{c.target.host}:{c.target.port}:{c.payload!r}"
        )
    for pid in site_pids:
        node = st.procs[pid]
        beh = behavior(node.behavior_name)
        canon = getattr(beh, "canonical", None)
        state = node.site_state
        if canon is not None:
            state = canon(state, lambda t: sid_map.get(t, -1))
        parts.append(f"s{pid}:{node.behavior_name}:{state!r}")
    d = int.from_bytes(blake2b("|".join(parts).encode(), digest_size=16).digest(), "big")
    object.__setattr__(st, "_canon_cache", d)
    return d


def _canon_stage(stage: Stage) -> str:
    match stage:
        case CallSend(p):
            return f"cs({p!r})"
        case CallFlight(p, r):
            return f"cf({p!r},{r})"
        case Held():
            return "held"
        case ReplySend(v):
            return f"rs({v!r})"
        case ReplyFlight(v, r):
            return f"rf({v!r},{r})"
    raise TypeError(stage)
