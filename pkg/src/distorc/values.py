"""First-class values: what sites consume, produce, and pass around.

The value domain is shared by the interpreter, the wire protocol, and
the analysis layer, so everything here is immutable and hashable with a
deterministic repr.  Site references are values too: programs pass
sites as arguments, so a reference must be able to cross the network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union


@dataclass(frozen=True, slots=True)
class Signal:
    """The unit value published by effect-only sites."""

    def __repr__(self) -> str:
        return "Signal"


@dataclass(frozen=True, slots=True)
class Bool:
    b: bool


@dataclass(frozen=True, slots=True)
class Int:
    n: int


@dataclass(frozen=True, slots=True)
class Rat:
    """A non-integral rational.  Integral values normalize to Int."""

    q: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.q, Fraction):
            object.__setattr__(self, "q", Fraction(self.q))
        if self.q.denominator == 1:
            raise ValueError("integral Rat; use mk_num to normalize")


@dataclass(frozen=True, slots=True)
class Str:
    s: str


@dataclass(frozen=True, slots=True)
class TupleV:
    items: tuple["Const", ...]


@dataclass(frozen=True, slots=True)
class InternalSite:
    """A built-in site resolved inside the local engine (let, if, add, ...)."""

    name: str


@dataclass(frozen=True, slots=True)
class RemoteSite:
    """A site reachable over the network at host:port.

    `seq` disambiguates multiple logical sites deployed behind one
    listener; single-site nodes use 0.
    """

    host: str
    port: int
    seq: int = field(default=0)


Const = Union[Signal, Bool, Int, Rat, Str, TupleV, InternalSite, RemoteSite]

SIGNAL = Signal()
TRUE = Bool(True)
FALSE = Bool(False)


def mk_num(x: Fraction | int) -> Const:
    """Normalize a rational: integral values become Int, others Rat."""
    f = Fraction(x)
    if f.denominator == 1:
        return Int(f.numerator)
    return Rat(f)


def num_value(c: Const) -> Fraction | None:
    """The numeric value of a constant, or None when it is not a number."""
    match c:
        case Int(n):
            return Fraction(n)
        case Rat(q):
            return q
        case _:
            return None


def const_str(c: Const) -> str:
    """Render a value the way the language writes literals."""
    match c:
        case Signal():
            return "signal"
        case Bool(b):
            return "true" if b else "false"
        case Int(n):
            return str(n)
        case Rat(q):
            return f"{q.numerator}/{q.denominator}"
        case Str(s):
            return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'
        case TupleV(items):
            return "(" + ", ".join(const_str(v) for v in items) + ")"
        case InternalSite(name):
            return f"<site {name}>"
        case RemoteSite(host, port, seq):
            return f"<site {host}:{port}:{seq}>"
    raise TypeError(f"not a value: {c!r}")
