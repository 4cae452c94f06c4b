"""Shared fixtures: small site behaviors the scenario tests deploy."""

from __future__ import annotations

import sys
from dataclasses import dataclass

import distorc.auction  # noqa: F401  (registers the auction behaviors)
from distorc.sites import Reply, register_behavior
from distorc.values import Const, Int, Str, TupleV


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance checks")
        for line in lines:
            terminalreporter.write_line(line)


@dataclass(frozen=True)
class EchoSite:
    """Replies with whatever it was sent."""

    name: str = "t-echo"

    def initial_state(self):
        return ()

    def handle(self, state, token, payload):
        return state, (Reply(token, payload),), (f"echoed {payload!r}",)


@dataclass(frozen=True)
class MuteSite:
    """Never replies; every call hangs forever."""

    name: str = "t-mute"

    def initial_state(self):
        return ()

    def handle(self, state, token, payload):
        return state, (), ()


@dataclass(frozen=True)
class CounterSite:
    """Replies with how many calls it has served, starting at 1."""

    name: str = "t-counter"

    def initial_state(self):
        return 0

    def handle(self, state, token, payload):
        return state + 1, (Reply(token, Int(state + 1)),), ()


@dataclass(frozen=True)
class HoldOneSite:
    """Parks the first call and answers it when the second arrives.

    Exercises deferred replies: the first caller's reply is released by
    someone else's request.
    """

    name: str = "t-holdone"

    def initial_state(self):
        return None  # the parked token, if any

    def handle(self, state, token, payload):
        if state is None:
            return token, (), ()
        return None, (Reply(state, payload), Reply(token, Str("second"))), ()


register_behavior(EchoSite())
register_behavior(MuteSite())
register_behavior(CounterSite())
register_behavior(HoldOneSite())
