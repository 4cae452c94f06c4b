"""Built-in sites and the behavior protocol for served sites.

Built-in sites run inside the calling engine and respond in the same
instant (or, for the timer, after a chosen delay).  A call that a site
declines to answer is not an error: the call simply never returns,
which the calculus treats as silence.

Served sites (the auction, the seller, ...) are state machines driven
by one message at a time.  The same behavior object backs both the
simulation model and the live network runtime, so anything it needs to
remember, including calls it is deliberately holding open, must live in
its immutable state value.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Protocol

from .timebase import TimeInf
from .values import (
    SIGNAL,
    Bool,
    Const,
    Int,
    Rat,
    TupleV,
    mk_num,
    num_value,
)

# ---------------------------------------------------------------------------
# Outcomes of a built-in call


@dataclass(frozen=True, slots=True)
class PublishNow:
    value: Const


@dataclass(frozen=True, slots=True)
class NeverReply:
    """The call stays silent forever."""


@dataclass(frozen=True, slots=True)
class FireLater:
    delay: TimeInf
    value: Const


InternalOutcome = PublishNow | NeverReply | FireLater

INTERNAL_SITES = frozenset(
    {"let", "if", "clock", "rtimer", "add", "sub", "mul", "min", "eq", "neq", "leq", "gt", "proj"}
)

_SILENT = NeverReply()


def eval_internal(name: str, args: tuple[Const, ...], clock: Fraction) -> InternalOutcome:
    """Evaluate a built-in site call with ground arguments."""
    match name:
        case "let":
            if len(args) == 0:
                return PublishNow(SIGNAL)
            if len(args) == 1:
                return PublishNow(args[0])
            return PublishNow(TupleV(args))
        case "if":
            if len(args) == 1 and args[0] == Bool(True):
                return PublishNow(SIGNAL)
            return _SILENT
        case "clock":
            if len(args) == 0:
                return PublishNow(mk_num(clock))
            return _SILENT
        case "rtimer":
            if len(args) == 1:
                t = num_value(args[0])
                if t is not None and t >= 0:
                    return FireLater(TimeInf(t), SIGNAL)
            return _SILENT
        case "add" | "sub" | "mul" | "min" if len(args) == 2:
            a, b = num_value(args[0]), num_value(args[1])
            if a is None or b is None:
                return _SILENT
            match name:
                case "add":
                    return PublishNow(mk_num(a + b))
                case "sub":
                    return PublishNow(mk_num(a - b))
                case "mul":
                    return PublishNow(mk_num(a * b))
                case _:
                    return PublishNow(mk_num(min(a, b)))
        case "eq" if len(args) == 2:
            return PublishNow(Bool(args[0] == args[1]))
        case "neq" if len(args) == 2:
            return PublishNow(Bool(args[0] != args[1]))
        case "leq" | "gt" if len(args) == 2:
            a, b = num_value(args[0]), num_value(args[1])
            if a is None or b is None:
                return _SILENT
            return PublishNow(Bool(a <= b if name == "leq" else a > b))
        case "proj" if len(args) == 2:
            match args:
                case (Int(i), TupleV(items)) if 0 <= i < len(items):
                    return PublishNow(items[i])
            return _SILENT
    return _SILENT


# ---------------------------------------------------------------------------
# Served-site behaviors


@dataclass(frozen=True, slots=True)
class Reply:
    """An answer to a held call, addressed by the engine-issued token."""

    token: int
    value: Const


class SiteBehavior(Protocol):
    """One served site's logic, shared by simulation and live runtime.

    `handle` consumes one incoming call and returns the new state, any
    replies now due (possibly answering earlier tokens the site was
    holding), and human-readable log lines.  Not replying to the given
    token means the call stays open; a token never answered is a call
    that hangs forever, which is a legitimate behavior.
    """

    name: str

    def initial_state(self) -> Hashable: ...

    def handle(
        self, state: Hashable, token: int, payload: Const
    ) -> tuple[Hashable, tuple[Reply, ...], tuple[str, ...]]: ...


BEHAVIORS: dict[str, SiteBehavior] = {}


def register_behavior(b: SiteBehavior) -> SiteBehavior:
    BEHAVIORS[b.name] = b
    return b


def behavior(name: str) -> SiteBehavior:
    return BEHAVIORS[name]
