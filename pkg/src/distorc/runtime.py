"""The live TCP runtime: one OS process per node, real sockets, and a
ticker process driving each node's logical clock.

A node is either an expression node (it runs an expression tree and
calls sites) or a site node (it serves one behavior).  Either way a
single owner loop holds the node state; everything arriving from the
network is queued into that loop's inbox and handled in order.  The
inbox outranks the clock: a tick is consumed only when no internal step
is enabled and no completed call return or inbound request is waiting.
Each consumed tick advances the logical clock by exactly 1, whatever
the wall-clock period, so logical time is simply the tick count.

Calls use one TCP connection each: the caller writes one frame and
reads until the server closes; the server reads one frame, hands it to
the behavior, and closes after writing the reply.  A behavior that
answers later (or never) leaves the connection parked, which is how
silent sites and blocking calls look on the wire.

Timers run at tick granularity here: a timer for t fires on the first
tick at which at least t logical units have passed, so fractional
delays round up.  The analysis side keeps dense time; deployments get
whatever resolution the tick period gives them.
"""

from __future__ import annotations

import asyncio
import json
import sys
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

from .machine import (
    CallOut,
    Defs,
    ExprNode,
    Loc,
    PublishOut,
    SiteNode,
    ZenoSuspicion,
    build_defs,
    deliver_return,
    fail_pending,
    internal_env,
    node_delta,
    normalize,
    resolve_expr,
    run_quiescent,
)
from .sites import behavior
from .syntax import Program, parse_expression, parse_program
from .timebase import fin
from .values import Const, RemoteSite, const_str
from .wire import DecodeError, FrameReader, encode_frame, decode_frame, decode_response

CONNECT_TIMEOUT = 5.0
TICKER_RETRIES = 3
TICKER_RETRY_DELAY = 0.5
MIN_TICK_MS = 200

TICK_FRAME = b"!\n"  # a serialized signal; any single frame counts as one tick


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExprRole:
    program: Program
    goal_src: str | None = None  # overrides the program's goal expression


@dataclass(frozen=True)
class SiteRole:
    behavior_name: str
    seq: int = 0


@dataclass(frozen=True)
class NodeConfig:
    self_loc: Loc
    clock_port: int
    tick_period_ms: int
    role: ExprRole | SiteRole
    peers: dict[str, Loc] = field(default_factory=dict)


def _parse_loc(text: str) -> Loc:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"expected host:port, got {text!r}")
    return Loc(host, int(port))


def load_config(path: str | Path) -> NodeConfig:
    """Read a node config file (JSON).

    Keys: self_loc "host:port", clock_port, tick_period_ms, peers
    {name: "host:port"}, role {kind: "expression", program_file, goal?}
    or {kind: "site", behavior, seq?}.  Tick periods under 200 ms are
    rejected unless allow_fast_tick is set; shorter periods are for
    tests, not deployments.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        self_loc = _parse_loc(raw["self_loc"])
        clock_port = int(raw["clock_port"])
        period = int(raw["tick_period_ms"])
        role_raw = raw["role"]
        kind = role_raw["kind"]
    except KeyError as e:
        raise ConfigError(f"{path}: missing key {e.args[0]!r}") from None
    if period <= 0:
        raise ConfigError(f"{path}: tick_period_ms must be positive")
    if period < MIN_TICK_MS and not raw.get("allow_fast_tick", False):
        raise ConfigError(
            f"{path}: tick_period_ms {period} below {MIN_TICK_MS}; "
            "set allow_fast_tick to override"
        )
    peers = {name: _parse_loc(loc) for name, loc in raw.get("peers", {}).items()}
    role: ExprRole | SiteRole
    if kind == "expression":
        src_file = path.parent / role_raw["program_file"]
        try:
            src = src_file.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read program {src_file}: {e}") from None
        role = ExprRole(parse_program(src), role_raw.get("goal"))
    elif kind == "site":
        role = SiteRole(role_raw["behavior"], int(role_raw.get("seq", 0)))
    else:
        raise ConfigError(f"{path}: unknown role kind {kind!r}")
    return NodeConfig(self_loc, clock_port, period, role, peers)


def _stdout_log(line: str) -> None:
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def build_expr_node(cfg: NodeConfig) -> tuple[Defs, ExprNode]:
    assert isinstance(cfg.role, ExprRole)
    env = {name: RemoteSite(loc.host, loc.port, 0) for name, loc in cfg.peers.items()}
    defs, main = build_defs(cfg.role.program, env)
    if cfg.role.goal_src is not None:
        goal = parse_expression(
            cfg.role.goal_src, decls=[d.name for d in cfg.role.program.decls]
        )
        main = normalize(resolve_expr(goal, {**internal_env(), **env}))
    return defs, ExprNode(cfg.self_loc, Fraction(0), main)


class Node:
    """One running node: owner loop, clock server, and (for sites) the
    request server.  Use `await Node(cfg).run()` or run() as a task and
    call stop() to shut down."""

    def __init__(self, cfg: NodeConfig, log: Callable[[str], None] = _stdout_log) -> None:
        self.cfg = cfg
        self.log = log
        self._inbox: deque[tuple] = deque()
        self._ticks = 0
        self._wake = asyncio.Event()
        self._stopping = asyncio.Event()
        self.started = asyncio.Event()
        self._servers: list[asyncio.Server] = []
        self._tasks: set[asyncio.Task] = set()
        self._parked: dict[int, asyncio.StreamWriter] = {}
        self._next_token = 0
        self.ticks_consumed = 0
        self.calls_opened = 0
        self.published: list[Const] = []
        if isinstance(cfg.role, SiteRole):
            beh = behavior(cfg.role.behavior_name)
            self.node: ExprNode | SiteNode = SiteNode(
                cfg.self_loc, Fraction(0), beh.name, beh.initial_state()
            )
            self.defs: Defs | None = None
        else:
            self.defs, self.node = build_expr_node(cfg)

    # -- plumbing ----------------------------------------------------

    def _post(self, item: tuple) -> None:
        self._inbox.append(item)
        self._wake.set()

    def _spawn(self, coro) -> None:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    def stop(self) -> None:
        self._stopping.set()
        self._wake.set()

    # -- servers -----------------------------------------------------

    async def _start_clock_server(self) -> None:
        server = await asyncio.start_server(
            self._clock_conn, self.cfg.self_loc.host, self.cfg.clock_port
        )
        self._servers.append(server)
        self.log("Clock server socket created.")
        self.log("Awaiting connection from ticker ...")

    async def _clock_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self.log("Ticker connected.")
        frames = FrameReader()
        try:
            while not self._stopping.is_set():
                data = await reader.read(4096)
                if not data:
                    break
                for _payload in frames.feed(data):
                    self._ticks += 1
                    self._wake.set()
        finally:
            writer.close()

    async def _start_site_server(self) -> None:
        server = await asyncio.start_server(
            self._site_conn, self.cfg.self_loc.host, self.cfg.self_loc.port
        )
        self._servers.append(server)

    async def _site_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        frames = FrameReader()
        payload = None
        try:
            while payload is None:
                data = await reader.read(4096)
                if not data:
                    return  # peer gave up before a full frame
                got = frames.feed(data)
                if got:
                    payload = got[0]
        except OSError:
            return
        try:
            value = decode_frame(payload)
        except DecodeError as e:
            self.log(f"Dropping undecodable request: {e}")
            writer.close()
            return
        token = self._next_token
        self._next_token += 1
        self._parked[token] = writer
        self._post(("request", token, value))

    # -- outbound calls ----------------------------------------------

    async def _call_site(self, handle: int, target: RemoteSite, payload: Const) -> None:
        try:
            reader, writer = await asyncio.wait_for(
                asyncio.open_connection(target.host, target.port), CONNECT_TIMEOUT
            )
        except (OSError, asyncio.TimeoutError):
            self._post(("fail", handle))
            return
        try:
            writer.write(encode_frame(payload))
            await writer.drain()
            data = await reader.read()
        except OSError:
            self._post(("fail", handle))
            return
        finally:
            writer.close()
        if not data:
            # Server closed without answering: a failed call, not a
            # silent one (silence keeps the connection open).
            self._post(("fail", handle))
            return
        try:
            value = decode_response(data)
        except DecodeError:
            self._post(("fail", handle))
            return
        self._post(("return", handle, value))

    # -- the owner loop ----------------------------------------------

    def _dispatch_actions(self, actions) -> None:
        for act in actions:
            match act:
                case CallOut(handle, target, payload):
                    self.calls_opened += 1
                    self._spawn(self._call_site(handle, target, payload))
                case PublishOut(value):
                    self.published.append(value)
                    self.log(f"Published {const_str(value)}")

    def _reply(self, token: int, value: Const) -> None:
        writer = self._parked.pop(token, None)
        if writer is None:
            return
        try:
            writer.write(encode_frame(value))
        except OSError:
            pass
        self._spawn(_drain_close(writer))

    def _handle_item(self, item: tuple) -> None:
        match item:
            case ("return", handle, value):
                if isinstance(self.node, ExprNode):
                    delivered = deliver_return(self.node, handle, value)
                    if delivered is not None:
                        self.node = delivered
            case ("fail", handle):
                if isinstance(self.node, ExprNode):
                    failed = fail_pending(self.node, handle)
                    if failed is not None:
                        self.node = failed
            case ("request", token, value):
                if isinstance(self.node, SiteNode):
                    beh = behavior(self.node.behavior_name)
                    state, replies, logs = beh.handle(self.node.site_state, token, value)
                    self.node = SiteNode(self.node.loc, self.node.clock, self.node.behavior_name, state)
                    for line in logs:
                        self.log(line)
                    for r in replies:
                        self._reply(r.token, r.value)
                else:
                    self.log("Ignoring a request: this node serves no site")

    def _consume_tick(self) -> None:
        self._ticks -= 1
        self.ticks_consumed += 1
        self.node = node_delta(self.node, fin(1))
        self.log("Tick!")

    async def run(self) -> None:
        who = self.cfg.self_loc
        if isinstance(self.cfg.role, SiteRole):
            await self._start_site_server()
            self.log(
                f'Site "{who.host}":{who.port} {self.cfg.role.seq} initializing... '
                "Site is ready."
            )
        else:
            self.log(f'Node "{who.host}":{who.port} initializing... Node is ready.')
        await self._start_clock_server()
        self.started.set()
        try:
            while not self._stopping.is_set():
                if isinstance(self.node, ExprNode):
                    assert self.defs is not None
                    self.node, actions = run_quiescent(self.defs, self.node)
                    self._dispatch_actions(actions)
                if self._inbox:
                    if self._ticks >= 2:
                        self.log("Warning: tick backlog while work is pending; "
                                 "the tick period may be too short")
                    self._handle_item(self._inbox.popleft())
                    continue
                if self._ticks > 0:
                    self._consume_tick()
                    continue
                self._wake.clear()
                # Re-check: something may have arrived between the last
                # poll and clearing the flag.
                if self._inbox or self._ticks or self._stopping.is_set():
                    continue
                await self._wake.wait()
        except ZenoSuspicion as e:
            self.log(f"Aborting: {e}")
            raise
        finally:
            await self._shutdown()

    async def _shutdown(self) -> None:
        for server in self._servers:
            server.close()
        for writer in self._parked.values():
            writer.close()
        self._parked.clear()
        for task in list(self._tasks):
            task.cancel()
        for server in self._servers:
            try:
                await server.wait_closed()
            except asyncio.CancelledError:
                pass


async def _drain_close(writer: asyncio.StreamWriter) -> None:
    try:
        await writer.drain()
    except OSError:
        pass
    writer.close()


# ---------------------------------------------------------------------------
# The ticker


class TickerDisconnected(RuntimeError):
    pass


async def ticker(host: str, port: int, period_ms: int, max_ticks: int | None = None) -> None:
    """Feed tick tokens to one node's clock port, one frame per period.

    Retries the initial connect a few times (the node may still be
    starting), then never reconnects: losing the node kills the ticker.
    """
    last: Exception | None = None
    for attempt in range(TICKER_RETRIES):
        if attempt:
            await asyncio.sleep(TICKER_RETRY_DELAY)
        try:
            _reader, writer = await asyncio.wait_for(
                asyncio.open_connection(host, port), CONNECT_TIMEOUT
            )
            break
        except (OSError, asyncio.TimeoutError) as e:
            last = e
    else:
        raise TickerDisconnected(f"cannot reach clock port {host}:{port}: {last}")
    sent = 0
    try:
        while max_ticks is None or sent < max_ticks:
            await asyncio.sleep(period_ms / 1000.0)
            writer.write(TICK_FRAME)
            try:
                await writer.drain()
            except OSError as e:
                raise TickerDisconnected(f"node went away: {e}") from None
            sent += 1
    finally:
        writer.close()


# ---------------------------------------------------------------------------
# Entry points


async def run_node(cfg: NodeConfig, log: Callable[[str], None] = _stdout_log) -> None:
    await Node(cfg, log).run()


async def run_node_with_ticker(cfg: NodeConfig, log: Callable[[str], None] = _stdout_log) -> None:
    """Run a node plus its own ticker in one process (deployment mode)."""
    node = Node(cfg, log)
    node_task = asyncio.ensure_future(node.run())
    await asyncio.wait_for(node.started.wait(), CONNECT_TIMEOUT)
    tick_task = asyncio.ensure_future(
        ticker(cfg.self_loc.host, cfg.clock_port, cfg.tick_period_ms)
    )
    done, pending = await asyncio.wait(
        {node_task, tick_task}, return_when=asyncio.FIRST_EXCEPTION
    )
    for t in pending:
        t.cancel()
    for t in done:
        t.result()
