"""Small deployments shared by the simulation and acceptance suites.

Each scenario is an expression node plus a couple of served sites,
kept tiny so exhaustive raw-rule exploration stays cheap.
"""
from __future__ import annotations

from fractions import Fraction

from distorc.machine import ExprNode, Loc, SiteNode, build_defs
from distorc.simmodel import Context, GlobalState, SrvReq, init_servers, make_context, new_system
from distorc.sites import behavior
from distorc.syntax import parse_program
from distorc.timebase import INF, ZERO, fin
from distorc.values import RemoteSite


def system(
    src: str,
    sites: tuple[tuple[str, str], ...],
    ds,
    explore_errors: bool = True,
    fuel: int = 100_000,
    ghosts: tuple[str, ...] = (),
) -> tuple[Context, GlobalState]:
    """Build a one-expression deployment.

    `sites` maps source-level names to registered behavior names; each
    gets its own node and server socket.  Names in `ghosts` resolve to
    addresses nobody serves, for exercising stalled connects.
    """
    env = {}
    nodes = [ExprNode(Loc("10.1.0.1", 41000), Fraction(0), None)]
    reqs = []
    for i, (name, beh) in enumerate(sites, start=1):
        host, port = f"10.1.0.{i + 1}", 41000 + i
        env[name] = RemoteSite(host, port)
        nodes.append(SiteNode(Loc(host, port), Fraction(0), beh, behavior(beh).initial_state()))
        reqs.append(SrvReq(i, port))
    for j, name in enumerate(ghosts):
        env[name] = RemoteSite(f"10.9.9.{j + 1}", 49000 + j)
    defs, main = build_defs(parse_program(src), env)
    nodes[0] = ExprNode(nodes[0].loc, Fraction(0), main)
    state = init_servers(new_system(tuple(nodes), tuple(reqs)))
    return make_context(defs, ds, explore_errors, fuel), state


D0 = (ZERO,)
D01 = (ZERO, fin(1))


def echo_system(ds=D0, explore_errors: bool = True):
    return system("Echo(5) >u> let(u)", (("Echo", "t-echo"),), ds, explore_errors)


def timeout_system(ds=D01, explore_errors: bool = False):
    """A round that races a reply against a timer; both can win."""
    src = 'let(x) <x< (rtimer(2) >> "late" | Echo("fast"))'
    return system(src, (("Echo", "t-echo"),), ds, explore_errors)


def concurrent_system(ds=D01, explore_errors: bool = False):
    return system("Echo(1) | Echo(2)", (("Echo", "t-echo"),), ds, explore_errors)


def mute_system(ds=D0, explore_errors: bool = True):
    src = "let(x) <x< (rtimer(1) >> 9 | Mute(5))"
    return system(src, (("Mute", "t-mute"),), ds, explore_errors)


def counter_system(ds=D01, explore_errors: bool = False):
    src = "Count(1) >u> Count(u) >v> let(v)"
    return system(src, (("Count", "t-counter"),), ds, explore_errors)


def holdone_system(ds=D0, explore_errors: bool = False):
    src = 'Hold("a") | Hold("b")'
    return system(src, (("Hold", "t-holdone"),), ds, explore_errors)


def ghost_system(ds=D0, explore_errors: bool = True):
    return system("Ghost(1) | Echo(2)", (("Echo", "t-echo"),), ds, explore_errors, ghosts=("Ghost",))


def lossy_system():
    return system("Echo(5) >u> let(u)", (("Echo", "t-echo"),), (ZERO, INF), explore_errors=False)


# The criterion set: name -> zero-argument builder.  Kept at three or
# fewer processes with delays in {0, 1} so the naive enumeration stays
# exhaustive and fast.
RAW_SCENARIOS = {
    "echo-instant": lambda: echo_system(D0, True),
    "echo-delays": lambda: echo_system(D01, True),
    "timeout-race": lambda: timeout_system(D01, False),
    "concurrent-calls": lambda: concurrent_system(D01, False),
    "mute-with-timer": lambda: mute_system(D0, True),
    "stateful-counter": lambda: counter_system(D01, False),
    "held-replies": lambda: holdone_system(D01, False),
    "stalled-connect": lambda: ghost_system(D0, True),
}
