"""Exact time values: non-negative rationals extended with infinity.

All durations, clock readings, and message delays in the package are
`TimeInf` values.  Arithmetic is exact (built on `fractions.Fraction`);
infinity absorbs addition and dominates every comparison.  Subtraction
is truncated at zero, which is the only subtraction the step semantics
ever needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, Union

TimeLike = Union["TimeInf", Fraction, int, str]


@total_ordering
@dataclass(frozen=True, slots=True)
class TimeInf:
    """A point or duration on the time line: a rational >= 0, or infinity.

    Infinity is encoded as ``frac is None``.
    """

    frac: Fraction | None

    def __post_init__(self) -> None:
        f = self.frac
        if f is None:
            return
        if not isinstance(f, Fraction):
            f = Fraction(f)
            object.__setattr__(self, "frac", f)
        if f < 0:
            raise ValueError(f"negative time value: {f}")

    @property
    def is_inf(self) -> bool:
        return self.frac is None

    @property
    def is_zero(self) -> bool:
        return self.frac == 0

    def as_fraction(self) -> Fraction:
        if self.frac is None:
            raise ValueError("infinite time has no finite value")
        return self.frac

    def plus(self, other: TimeInf) -> TimeInf:
        if self.frac is None or other.frac is None:
            return INF
        return TimeInf(self.frac + other.frac)

    def monus(self, other: TimeInf) -> TimeInf:
        """Truncated subtraction: max(self - other, 0), with inf absorbing."""
        if other.frac is None:
            return ZERO
        if self.frac is None:
            return INF
        d = self.frac - other.frac
        return ZERO if d <= 0 else TimeInf(d)

    def __add__(self, other: TimeInf) -> TimeInf:
        return self.plus(other)

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, TimeInf):
            return NotImplemented
        if self.frac is None:
            return False
        if other.frac is None:
            return True
        return self.frac < other.frac

    def __str__(self) -> str:
        if self.frac is None:
            return "inf"
        if self.frac.denominator == 1:
            return str(self.frac.numerator)
        return f"{self.frac.numerator}/{self.frac.denominator}"

    def __repr__(self) -> str:
        return f"T({self})"


INF = TimeInf(None)
ZERO = TimeInf(Fraction(0))
ONE = TimeInf(Fraction(1))


def fin(value: Fraction | int | str) -> TimeInf:
    """Finite time from an int, Fraction, or numeric string."""
    return TimeInf(Fraction(value))


def time_of(value: TimeLike) -> TimeInf:
    if isinstance(value, TimeInf):
        return value
    if isinstance(value, str):
        return parse_time(value)
    return TimeInf(Fraction(value))


def parse_time(text: str) -> TimeInf:
    """Parse "inf", an integer, a fraction "p/q", or a decimal like "0.25"."""
    t = text.strip()
    if t.lower() in ("inf", "infinity"):
        return INF
    try:
        return TimeInf(Fraction(t))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad time literal: {text!r}") from exc


def min_time(items: Iterable[TimeInf]) -> TimeInf:
    """Minimum of the given times; INF when the iterable is empty."""
    return min(items, default=INF)
