"""Parameters, scenarios and time bookkeeping shared by every other module."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union


class ParamError(ValueError):
    """Raised for inputs outside the asymmetric (p < 1/2) regime or unparsable ones."""


class Kind(str, Enum):
    STRONG = "strong"
    WEAK = "weak"
    TRAFFIC = "traffic"


class Convention(str, Enum):
    """Where the running maximum of the traffic queue is sampled.

    ``EVERY_STEP`` records the queue after every time step, so an arrival
    that is served in the same signal cycle still counts.  ``BLOCK_END``
    only records the queue at the end of each full red+green cycle.
    """

    EVERY_STEP = "every-step"
    BLOCK_END = "block-end"


@dataclass(frozen=True)
class WalkParams:
    """Bias pair ``(p, q = 1 - p)`` with ``0 < p < 1/2``.

    ``rational`` is set when ``p`` was supplied as a fraction; exact oracles
    then work with it directly.
    """

    p: float
    q: float
    rational: Fraction | None = None

    @property
    def exact_p(self) -> Fraction:
        # binary floats are dyadic rationals, so this is still exact
        return self.rational if self.rational is not None else Fraction(self.p)

    @property
    def exact_q(self) -> Fraction:
        return 1 - self.exact_p

    @property
    def ratio(self) -> float:
        """q/p, always > 1."""
        return float(self.exact_q / self.exact_p)

    @property
    def log_ratio(self) -> float:
        return math.log(self.q) - math.log(self.p)

    def render(self) -> str:
        """Text form that :func:`validate_params` parses back to ``self``."""
        if self.rational is not None:
            return f"{self.rational.numerator}/{self.rational.denominator}"
        return repr(self.p)

    def decimal(self) -> str:
        return f"{self.p:.17g}"


@dataclass(frozen=True)
class Scenario:
    """Which walk: strong/weak reflection, or the traffic-light queue of period ``ell``."""

    kind: Kind
    ell: int = 1
    convention: Convention = Convention.EVERY_STEP

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.ell < 1:
            raise ParamError(f"ell must be >= 1, got {self.ell}")
        if self.kind is not Kind.TRAFFIC and self.ell != 1:
            raise ParamError("ell only applies to the traffic scenario")

    @classmethod
    def strong(cls) -> Scenario:
        return cls(Kind.STRONG)

    @classmethod
    def weak(cls) -> Scenario:
        return cls(Kind.WEAK)

    @classmethod
    def traffic(cls, ell: int = 1, convention: Convention | str = Convention.EVERY_STEP) -> Scenario:
        return cls(Kind.TRAFFIC, ell, Convention(convention))

    @property
    def is_traffic(self) -> bool:
        return self.kind is Kind.TRAFFIC

    @property
    def block_steps(self) -> int:
        """Steps per natural time unit: one full signal cycle for traffic, one step otherwise."""
        return 2 * self.ell if self.is_traffic else 1

    def require_exact(self) -> None:
        """Reject scenarios that have no transfer-matrix theory (traffic with ell > 1)."""
        if self.is_traffic and self.ell != 1:
            raise ParamError(
                f"exact and asymptotic results exist only for ell=1 (got ell={self.ell}); "
                "use simulation instead"
            )

    def label(self) -> str:
        if self.is_traffic:
            return f"traffic(ell={self.ell}, {self.convention.value})"
        return self.kind.value


@dataclass(frozen=True)
class TimeIndex:
    n: int
    unit: str = "steps"

    def __post_init__(self) -> None:
        if self.unit not in ("steps", "blocks"):
            raise ParamError(f"unit must be 'steps' or 'blocks', got {self.unit!r}")
        if int(self.n) != self.n or self.n < 0:
            raise ParamError(f"n must be a nonnegative integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))


Horizon = Union[int, TimeIndex]


def validate_params(p_input: str | float | Fraction) -> WalkParams:
    """Parse ``p`` from ``"a/b"``, a decimal string, or a number.

    Fractions (and :class:`~fractions.Fraction` objects) keep their exact
    form; decimals are float mode.

    >>> validate_params("1/3").q
    0.6666666666666666
    """
    rational: Fraction | None = None
    if isinstance(p_input, Fraction):
        rational = p_input
    elif isinstance(p_input, str):
        text = p_input.strip()
        if "/" in text:
            try:
                rational = Fraction(text)
            except (ValueError, ZeroDivisionError) as exc:
                raise ParamError(f"cannot parse fraction {p_input!r}") from exc
        else:
            try:
                value = float(text)
            except ValueError as exc:
                raise ParamError(f"cannot parse probability {p_input!r}") from exc
            return _from_float(value)
    elif isinstance(p_input, (int, float)) and not isinstance(p_input, bool):
        return _from_float(float(p_input))
    else:
        raise ParamError(f"unsupported input type {type(p_input).__name__}")

    if not 0 < rational < Fraction(1, 2):
        raise ParamError(f"p must satisfy 0 < p < 1/2, got {rational}")
    return WalkParams(float(rational), float(1 - rational), rational)


def _from_float(value: float) -> WalkParams:
    if not math.isfinite(value) or not 0.0 < value < 0.5:
        raise ParamError(f"p must satisfy 0 < p < 1/2, got {value!r}")
    return WalkParams(value, 1.0 - value, None)


def to_blocks(t: TimeIndex, scenario: Scenario) -> TimeIndex:
    """Convert a traffic horizon to whole signal cycles, rounding partial cycles down."""
    if not scenario.is_traffic:
        raise ParamError("block time only exists for the traffic scenario")
    if t.unit == "blocks":
        return t
    return TimeIndex(t.n // scenario.block_steps, "blocks")


def natural_length(n: Horizon, scenario: Scenario) -> int:
    """Number of transfer-matrix applications for horizon ``n``.

    Plain integers are already in the natural unit (blocks for traffic,
    steps for the walks).
    """
    if isinstance(n, TimeIndex):
        if scenario.is_traffic:
            return to_blocks(n, scenario).n
        if n.unit == "blocks":
            raise ParamError("unit=blocks is only meaningful for the traffic scenario")
        return n.n
    if int(n) != n or n < 0:
        raise ParamError(f"n must be a nonnegative integer, got {n!r}")
    return int(n)


def as_time_index(n: Horizon, scenario: Scenario) -> TimeIndex:
    if isinstance(n, TimeIndex):
        natural_length(n, scenario)
        return n
    return TimeIndex(int(n), "blocks" if scenario.is_traffic else "steps")


def parse_scenario(name: str, ell: int = 1, convention: str = "every-step") -> Scenario:
    try:
        kind = Kind(name)
    except ValueError as exc:
        raise ParamError(f"unknown scenario {name!r}") from exc
    if kind is Kind.TRAFFIC:
        return Scenario.traffic(ell, convention)
    if ell != 1:
        raise ParamError("--ell only applies to the traffic scenario")
    return Scenario(kind)
