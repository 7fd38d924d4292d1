"""Dominant poles, pole-residue CDFs, discrete Gumbel limits and moment asymptotics.

Root solving
------------
For every model the denominator ``R_k`` vanishes, in the square-root
variable ``t``, exactly where::

    ((1 + t) / (1 - t)) ** m  =  N(t) / (1 - 2p - t)

with exponent ``m = k + 1`` (strong and weak reflection), ``2k + 2``
(traffic, every-step maximum) or ``2k + 3`` (traffic, block-end maximum),
and ``N(t) = 1 - 2p + t`` except for weak reflection, where
``N(t) = p (s w - 1 + t)(1 + t + s w) / (1 + t)`` with ``s = sqrt(q/p)``
and ``w = sqrt(1 - t^2)``.  The dominant root sits just below
``t = 1 - 2p``, at distance ``delta ~ N (p/q)**m`` that underflows any
attempt to resolve it through ``t`` or ``z`` directly.  We therefore solve
for ``x = log(delta)`` and rebuild ``z_k - 1`` from ``delta`` without
cancellation.  For small levels the equation has no root in ``(0, 1 - 2p)``
(the dominant pole lies past the branch point); there the Perron root of
the transfer matrix is polished on ``R_k`` in the ``z`` domain instead.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import mpmath
import numpy as np

from .exact import (
    Dual,
    build_transfer,
    eval_R_and_derivative,
    min_level,
    rq_sequence,
)
from .model import (
    Convention,
    Horizon,
    Kind,
    ParamError,
    Scenario,
    TimeIndex,
    WalkParams,
    natural_length,
)
from .rootfind import RootError, newton_bisect

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286
FLUCTUATION_BAND = 0.02
RESIDUAL_TOL = 1e-12
BRANCH_T_MIN = 1e-3


@dataclass(frozen=True)
class RootResult:
    """Dominant zero ``z_k`` of ``R_k`` and the residue data of ``G_k`` there.

    ``gap`` is ``z_k - 1`` carried separately, since ``z_k`` itself rounds
    to 1.0 for deep levels.  ``t_k`` and ``delta`` are ``None`` when the
    root was found in the ``z`` domain.  ``mirror_amp`` is the residue
    weight of the pole at ``-z_k`` (strong reflection only; ``R_k`` is even
    there), entering the CDF with sign ``(-1)**n``.
    """

    k: int
    z_k: float
    gap: float
    t_k: float | None
    delta: float | None
    residue_amp: float
    mirror_amp: float
    domain: str
    iterations: int
    residual: float


@dataclass(frozen=True)
class GumbelLimit:
    """``P{M_n <= k} ~ exp(-c * n * r**(-k))`` with ``n`` counted in ``time_unit``."""

    c: float
    r: float
    time_unit: str


@dataclass(frozen=True)
class MomentAsymptotics:
    mean_offset: float
    variance: float
    gamma_const: float = EULER_GAMMA
    fluctuation_band: float = FLUCTUATION_BAND


# --------------------------------------------------------------------------
# constants


def _level_exponent(scenario: Scenario) -> int:
    """Power of ``q/p`` per level in the gap ``z_k - 1``."""
    return 2 if scenario.is_traffic else 1


def gap_limit(scenario: Scenario, params: WalkParams) -> float:
    """Limit of ``(z_k - 1) * (q/p)**(e*k)`` with ``e = 2`` for traffic, else 1."""
    scenario.require_exact()
    p, q = params.p, params.q
    d2 = (1.0 - 2.0 * p) ** 2
    if scenario.kind is Kind.STRONG:
        return d2 / (2.0 * q * q)
    if scenario.kind is Kind.WEAK:
        return p * d2 / (q * q)
    if scenario.convention is Convention.EVERY_STEP:
        return p * d2 / q**3
    # block-end chain: same root equation with exponent 2k+3 instead of 2k+2
    return p * p * d2 / q**4


def limit_constant(scenario: Scenario, params: WalkParams, time_unit: str = "steps") -> GumbelLimit:
    """Gumbel scale ``c`` and base ``r`` for horizons counted in ``time_unit``.

    For traffic one block is two steps, so ``c_steps = c_blocks / 2`` and
    both parameterizations give the same limit law.
    """
    scenario.require_exact()
    if time_unit not in ("steps", "blocks"):
        raise ParamError(f"unknown time unit {time_unit!r}")
    c = gap_limit(scenario, params)
    if scenario.is_traffic:
        r = params.ratio**2
        if time_unit == "steps":
            c /= scenario.block_steps
        return GumbelLimit(c, r, time_unit)
    if time_unit == "blocks":
        raise ParamError("block time only exists for the traffic scenario")
    return GumbelLimit(c, params.ratio, "steps")


def _horizon_in_unit(scenario: Scenario, n: Horizon) -> tuple[float, str]:
    if isinstance(n, TimeIndex):
        if n.unit == "blocks" and not scenario.is_traffic:
            raise ParamError("block time only exists for the traffic scenario")
        return float(n.n), n.unit
    return float(n), "blocks" if scenario.is_traffic else "steps"


def moment_asymptotics(scenario: Scenario, params: WalkParams, time_unit: str = "steps") -> MomentAsymptotics:
    lim = limit_constant(scenario, params, time_unit)
    log_r = math.log(lim.r)
    return MomentAsymptotics(
        mean_offset=(EULER_GAMMA + math.log(lim.c)) / log_r + 0.5,
        variance=math.pi**2 / 6.0 / log_r**2 + 1.0 / 12.0,
    )


def asymptotic_mean(scenario: Scenario, params: WalkParams, n: Horizon) -> float:
    """``log_r(n) + (gamma + ln c)/ln r + 1/2``; the periodic term is taken as zero."""
    value, unit = _horizon_in_unit(scenario, n)
    if value < 2:
        raise ParamError("asymptotic mean needs n >= 2")
    lim = limit_constant(scenario, params, unit)
    return math.log(value) / math.log(lim.r) + moment_asymptotics(scenario, params, unit).mean_offset


def asymptotic_variance(scenario: Scenario, params: WalkParams) -> float:
    """``pi^2/6 / ln(r)^2 + 1/12`` (for traffic ``r = (q/p)^2``)."""
    return moment_asymptotics(scenario, params).variance


def gumbel_cdf(scenario: Scenario, params: WalkParams, n: Horizon, k: int) -> float:
    """Discrete Gumbel law ``exp(-c n r**(-k))`` in the unit ``n`` is given in."""
    value, unit = _horizon_in_unit(scenario, n)
    lim = limit_constant(scenario, params, unit)
    if value == 0:
        return 1.0
    return math.exp(-lim.c * value * math.exp(-k * math.log(lim.r)))


# --------------------------------------------------------------------------
# root equation


def _log_n_and_slope(scenario: Scenario, p: float, t: float) -> tuple[float, float]:
    """``log N(t)`` and ``d log N / dt``."""
    if scenario.kind is not Kind.WEAK:
        n = 1.0 - 2.0 * p + t
        return math.log(n), 1.0 / n
    q = 1.0 - p
    s = math.sqrt(q / p)
    w = math.sqrt((1.0 - t) * (1.0 + t))
    a = s * w - 1.0 + t
    b = 1.0 + t + s * w
    da = 1.0 - s * t / w
    db = 1.0 - s * t / w
    return (
        math.log(p) + math.log(a) + math.log(b) - math.log1p(t),
        da / a + db / b - 1.0 / (1.0 + t),
    )


def root_exponent(scenario: Scenario, k: int) -> int:
    if scenario.is_traffic:
        return 2 * k + (3 if scenario.convention is Convention.BLOCK_END else 2)
    return k + 1


def _equation(scenario: Scenario, p: float, m: int, x: float) -> tuple[float, float]:
    q = 1.0 - p
    d = math.exp(x)
    t = (1.0 - 2.0 * p) - d
    log_n, slope = _log_n_and_slope(scenario, p, t)
    f = m * (math.log(2.0 * q - d) - math.log(2.0 * p + d)) - log_n + x
    df = 1.0 + d * (slope - m * (1.0 / (2.0 * q - d) + 1.0 / (2.0 * p + d)))
    return f, df


def _t_bracket(scenario: Scenario, p: float, m: int) -> tuple[float, float] | None:
    width = 1.0 - 2.0 * p
    hi = None
    # roots closer to t = 0 than the last probe are handed to the z domain
    for j in range(1, 18):
        t = width * 2.0**-j
        x = math.log(width - t)
        if _equation(scenario, p, m, x)[0] > 1e-12:
            hi = x
            break
    if hi is None:
        return None
    log_n_top, _ = _log_n_and_slope(scenario, p, width * (1 - 1e-12))
    lo = log_n_top - m * math.log((1.0 - p) / p) - 2.0
    while _equation(scenario, p, m, lo)[0] >= 0.0:
        lo -= 5.0
        if lo < -740.0:
            raise RootError("level too deep: delta underflows double precision")
    if lo < -740.0:
        raise RootError("level too deep: delta underflows double precision")
    return lo, min(hi, math.log(width))


def _residue_and_residual(
    scenario: Scenario, params: WalkParams, k: int, gap: float
) -> tuple[float, float, float, float]:
    """Residue weights at ``z_k`` (and ``-z_k`` for strong reflection), plus the scaled residual.

    ``Q_k(z_k)`` comes from the identity ``(1 - z) Q_k = R_k - f_k(z)``
    (``f_k`` the scenario's forcing term), which at a zero of ``R_k``
    avoids evaluating ``Q_k`` in the cancelling region near ``z = 1``.
    Everything is evaluated in working precision wide enough that neither
    the forcing term nor ``R_k'`` underflows at deep levels.  The residual
    is ``|R_k / R_k'|`` at ``z = 1 + gap`` relative to ``gap``.

    The gap is first polished by Newton steps in that precision: at deep
    levels ``ln(delta)`` is so large that its ulp alone exceeds the residual
    tolerance.  Returns ``(gap, amp, mirror, residual)``.
    """
    expo = _level_exponent(scenario)
    bits = 120 + math.ceil(2 * expo * (k + 2) * math.log2(params.ratio))
    with mpmath.workprec(bits):
        p = mpmath.mpf(params.exact_p.numerator) / params.exact_p.denominator
        g = mpmath.mpf(gap)
        for _ in range(4):
            z = 1 + g
            R, _ = rq_sequence(scenario, k, Dual(z, mpmath.mpf(1)), p)
            value, dR = R[k].val, R[k].der
            residual = float(abs(value / dR) / g)
            if residual < 1e-15:
                break
            g = mpmath.mpf(float(g - value / dR))
        gap_out = float(g)
        if scenario.kind is Kind.STRONG:
            amp = -((p * z) ** k) / (g * dR)
            mirror = (-1) ** k * g / (2 + g) * amp
            return gap_out, float(amp), float(mirror), residual
        if scenario.kind is Kind.WEAK:
            amp = -((p * z) ** (k + 1)) / (z * g * dR)
        elif scenario.convention is Convention.EVERY_STEP:
            amp = -p * (p * p * z) ** k / (g * dR)
        else:
            amp = -((p * p * z) ** (k + 1)) / (z * g * dR)
        return gap_out, float(amp), 0.0, residual


def _z_domain_root(scenario: Scenario, params: WalkParams, k: int) -> tuple[float, int]:
    A = np.array(build_transfer(scenario, k, params).dense(), dtype=float)
    eig = np.linalg.eigvals(A)
    lam = float(max(eig.real))
    z0 = 1.0 / lam

    def f(z: float) -> tuple[float, float]:
        return eval_R_and_derivative(scenario, k, z, params)

    for width in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
        lo, hi = z0 * (1 - width), z0 * (1 + width)
        f_lo, f_hi = f(lo)[0], f(hi)[0]
        if f_lo == 0.0 or f_hi == 0.0 or (f_lo < 0) != (f_hi < 0):
            return newton_bisect(f, lo, hi, rtol=1e-15)
    raise RootError(f"could not bracket the Perron root near z = {z0!r}")


@lru_cache(maxsize=8192)
def solve_root(scenario: Scenario, params: WalkParams, k: int) -> RootResult:
    """Dominant positive zero of ``R_k`` with its residue amplitude.

    Raises :class:`~walkmax.rootfind.RootError` when the root cannot be
    bracketed, or when its residual check fails.
    """
    scenario.require_exact()
    if k < min_level(scenario) or (scenario.kind is Kind.STRONG and k < 1):
        raise ParamError(f"no transfer matrix at level {k} for {scenario.label()}")
    p, q = params.p, params.q
    m = root_exponent(scenario, k)
    bracket = _t_bracket(scenario, p, m)
    t = 0.0
    if bracket is not None:
        x, its = newton_bisect(lambda x: _equation(scenario, p, m, x), *bracket, rtol=0.0, atol=1e-14)
        delta = math.exp(x)
        t = (1.0 - 2.0 * p) - delta
    # near the branch point the t-equation degenerates (cubic contact at t = 0)
    if bracket is not None and t > BRANCH_T_MIN * (1.0 - 2.0 * p):
        lift = (2.0 * delta * (q - p) - delta * delta) / (4.0 * p * q)  # 1 - t^2 - 4pq over 4pq
        if scenario.is_traffic:
            gap = lift
            z = 1.0 + gap
        else:
            z = math.sqrt(1.0 + lift)
            gap = lift / (z + 1.0)
        domain = "t"
        t_k: float | None = t
        delta_k: float | None = delta
    else:
        z, its = _z_domain_root(scenario, params, k)
        gap = z - 1.0
        t_k = delta_k = None
        domain = "z"
    if not gap > 0.0:
        raise RootError(f"dominant root {z!r} is not above 1 at level {k}")
    if gap < sys.float_info.min:
        raise RootError(f"level {k} too deep: z_k - 1 = {gap!r} is subnormal in double precision")
    gap, amp, mirror, residual = _residue_and_residual(scenario, params, k, gap)
    z = 1.0 + gap
    if residual > RESIDUAL_TOL:
        raise RootError(f"root residual {residual:.3g} exceeds {RESIDUAL_TOL:g} at level {k}")
    return RootResult(k, z, gap, t_k, delta_k, amp, mirror, domain, its, residual)


def t_domain_threshold(scenario: Scenario, params: WalkParams, k_limit: int = 400) -> int:
    """Smallest level whose root is found in the ``t`` domain."""
    for k in range(min_level(scenario), k_limit):
        if _t_bracket(scenario, params.p, root_exponent(scenario, k)) is not None:
            return k
    raise RootError("no t-domain root below the level limit")


# --------------------------------------------------------------------------
# CDF surrogates


def pole_cdf(scenario: Scenario, params: WalkParams, n: Horizon, k: int) -> float:
    """Dominant-pole approximation ``a_k * z_k**(-n)`` to ``P{M_n <= k}``.

    ``n`` is converted to the scenario's natural unit (blocks for traffic).
    Strong reflection adds the mirror pole at ``-z_k``.  Values where the
    answer is known exactly (``k >= n``, or level 0 of the strong walk)
    are returned exactly; the rest are clamped to ``[0, 1]``.
    """
    steps = natural_length(n, scenario)
    scenario.require_exact()
    if steps == 0 or k >= steps:
        return 1.0
    if k < min_level(scenario):
        return 0.0
    root = solve_root(scenario, params, k)
    decay = math.exp(-steps * math.log1p(root.gap))
    value = (root.residue_amp + (root.mirror_amp if steps % 2 == 0 else -root.mirror_amp)) * decay
    if value > 1.0 or value < 0.0:
        logger.debug("pole_cdf clamped %r at k=%d, n=%d", value, k, steps)
    return min(1.0, max(0.0, value))


def root_convergence_table(scenario: Scenario, params: WalkParams, k_range: Any) -> list[tuple[int, float, float]]:
    """Rows ``(k, z_k, (z_k - 1) * (q/p)**(e*k))``; the last column tends to :func:`gap_limit`."""
    expo = _level_exponent(scenario)
    rows = []
    for k in k_range:
        root = solve_root(scenario, params, k)
        scaled = math.exp(math.log(root.gap) + expo * k * params.log_ratio)
        rows.append((k, root.z_k, scaled))
    return rows
