"""Exact finite-horizon distribution of the running maximum.

Three independent routes to ``P{M_n <= k}``:

* powers of the tridiagonal transfer matrix on states ``{0..k}``,
* coefficients of the rational generating function ``G_k = Q_k / R_k``,
  where ``R_k`` and ``Q_k`` come from three-term recurrences,
* brute-force path enumeration (see :mod:`walkmax.bruteforce`).

The recurrences are written once, generically, and evaluated over whatever
number type is handed in: :class:`~fractions.Fraction` for exact work,
floats, :mod:`mpmath` numbers, :class:`Poly` for coefficient lists, or
:class:`Dual` for derivatives.

For the traffic queue the choice of maximum convention selects the chain:
``every-step`` is the matrix with corner entry ``pq`` (the pair
``R_k = R~_k + pqz R~_{k-1}``), ``block-end`` is the chain whose corner is
``2pq``, whose generating function is exactly ``Q~_k / R~_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import mpmath
import numba as nb
import numpy as np

from .model import (
    Convention,
    Horizon,
    Kind,
    ParamError,
    Scenario,
    TimeIndex,
    WalkParams,
    as_time_index,
    natural_length,
)

DEFAULT_BUDGET = 10**9
CLAMP_SLACK = 1e-12
TAIL_EPS = 1e-15


class BudgetExceeded(ValueError):
    """Matrix-power cost ``n * (k + 1)`` is above the configured budget."""


# --------------------------------------------------------------------------
# number types for the generic recurrences


class Poly:
    """Dense univariate polynomial over any coefficient field (low order first)."""

    __slots__ = ("c",)

    def __init__(self, coeffs: Sequence[Any]):
        self.c = list(coeffs) or [0]

    @classmethod
    def z(cls, one: Any = 1) -> Poly:
        return cls([one * 0, one])

    def _coerce(self, other: Any) -> Poly:
        return other if isinstance(other, Poly) else Poly([other])

    def __add__(self, other: Any) -> Poly:
        o = self._coerce(other).c
        n = max(len(self.c), len(o))
        a = self.c + [0] * (n - len(self.c))
        b = o + [0] * (n - len(o))
        return Poly([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly([-x for x in self.c])

    def __sub__(self, other: Any) -> Poly:
        return self + (-self._coerce(other))

    def __rsub__(self, other: Any) -> Poly:
        return self._coerce(other) - self

    def __mul__(self, other: Any) -> Poly:
        if not isinstance(other, Poly):
            return Poly([x * other for x in self.c])
        out = [self.c[0] * 0] * (len(self.c) + len(other.c) - 1)
        for i, x in enumerate(self.c):
            if x == 0:
                continue
            for j, y in enumerate(other.c):
                out[i + j] += x * y
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, e: int) -> Poly:
        out: Poly = Poly([self.c[0] * 0 + 1])
        for _ in range(e):
            out = out * self
        return out

    def trimmed(self) -> list[Any]:
        c = list(self.c)
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        return c


@dataclass(frozen=True)
class Dual:
    """Forward-mode derivative: ``val + der * eps`` with ``eps**2 = 0``."""

    val: Any
    der: Any = 0

    def _coerce(self, other: Any) -> Dual:
        return other if isinstance(other, Dual) else Dual(other, 0)

    def __add__(self, other: Any) -> Dual:
        o = self._coerce(other)
        return Dual(self.val + o.val, self.der + o.der)

    __radd__ = __add__

    def __neg__(self) -> Dual:
        return Dual(-self.val, -self.der)

    def __sub__(self, other: Any) -> Dual:
        return self + (-self._coerce(other))

    def __rsub__(self, other: Any) -> Dual:
        return self._coerce(other) - self

    def __mul__(self, other: Any) -> Dual:
        o = self._coerce(other)
        return Dual(self.val * o.val, self.val * o.der + self.der * o.val)

    __rmul__ = __mul__

    def __pow__(self, e: int) -> Dual:
        if e == 0:
            return Dual(self.val * 0 + 1, self.der * 0)
        return Dual(self.val**e, e * self.val ** (e - 1) * self.der)


# --------------------------------------------------------------------------
# R_k / Q_k recurrences


def min_level(scenario: Scenario) -> int:
    """Smallest level with a transfer matrix: 1 for strong reflection, else 0."""
    return 1 if scenario.kind is Kind.STRONG else 0


def rq_sequence(scenario: Scenario, k_max: int, z: Any, p: Any) -> tuple[list[Any], list[Any]]:
    """Run the denominator/numerator recurrences for ``k = 0..k_max``.

    Returns lists ``R[0..k_max]`` and ``Q[0..k_max]`` in the number type of
    ``z`` (and ``p``).  The generating function of ``P{M_n <= k}`` is
    ``Q[k] / R[k]``; for strong reflection ``Q[0] / R[0] = 1`` covers
    ``n = 0`` only, level 0 being unreachable afterwards.
    """
    scenario.require_exact()
    if k_max < 0:
        raise ParamError("k must be nonnegative")
    q = 1 - p
    one = z * 0 + 1
    zero = z * 0
    kind = scenario.kind

    if kind is Kind.TRAFFIC:
        a = one - 2 * p * q * z
        b = p * p * q * q * z * z
        r_prev, r_cur = one, one - (1 - p * p) * z  # R~_{-1}, R~_0
        q_prev, q_cur = zero, one
        p2z = p * p * z
        force = one
        Rt, Qt = [r_cur], [q_cur]
        R, Q = [r_cur + p * q * z * r_prev], [q_cur + p * q * z * q_prev]
        for _ in range(1, k_max + 1):
            force = force * p2z
            r_prev, r_cur = r_cur, a * r_cur - b * r_prev
            q_prev, q_cur = q_cur, a * q_cur - b * q_prev + force
            Rt.append(r_cur)
            Qt.append(q_cur)
            R.append(r_cur + p * q * z * r_prev)
            Q.append(q_cur + p * q * z * q_prev)
        if scenario.convention is Convention.BLOCK_END:
            return Rt, Qt
        return R, Q

    b = p * q * z * z
    if kind is Kind.STRONG:
        r_prev, r_cur = one, one  # unused R_{-1} slot, R_0
        R = [one]
        q_prev, q_cur = zero, one
        Q = [one]
        force = z
        pz = p * z
        for j in range(1, k_max + 1):
            if j == 1:
                r_prev, r_cur = r_cur, one - q * z * z
            else:
                r_prev, r_cur = r_cur, r_cur - b * r_prev
                force = force * pz  # p**(j-1) * z**j
            q_prev, q_cur = q_cur, q_cur - b * q_prev + force
            R.append(r_cur)
            Q.append(q_cur)
        return R, Q

    # weak reflection
    r_prev, r_cur = one, one - q * z
    q_prev, q_cur = zero, one
    R, Q = [r_cur], [q_cur]
    force = one
    pz = p * z
    for _ in range(1, k_max + 1):
        force = force * pz
        r_prev, r_cur = r_cur, r_cur - b * r_prev
        q_prev, q_cur = q_cur, q_cur - b * q_prev + force
        R.append(r_cur)
        Q.append(q_cur)
    return R, Q


@dataclass(frozen=True)
class RQPair:
    k: int
    z: float
    R: float
    Q: float


def _exact_z(z: float | Fraction) -> Fraction:
    if isinstance(z, Fraction):
        return z
    if not math.isfinite(z):
        raise ParamError("z must be finite")
    return Fraction(z)


def eval_RQ_recurrence(
    scenario: Scenario, k: int, z: float | Fraction, params: WalkParams, exact: bool = True
) -> RQPair:
    """Evaluate ``R_k(z)`` and ``Q_k(z)`` by forward iteration of the recurrences.

    With ``exact=True`` (default) the float ``z`` is taken at its exact binary
    value and the iteration runs in rational arithmetic.  That matters near
    ``z = 1``, where the float recurrence amplifies rounding by ``(q/p)**k``.
    """
    _check_level(scenario, k, allow_zero=True)
    if exact:
        R, Q = rq_sequence(scenario, k, _exact_z(z), params.exact_p)
    else:
        R, Q = rq_sequence(scenario, k, float(z), params.p)
    return RQPair(k, float(z), float(R[k]), float(Q[k]))


def rq_exact_sequence(
    scenario: Scenario, k_max: int, z: float | Fraction, params: WalkParams
) -> list[RQPair]:
    R, Q = rq_sequence(scenario, k_max, _exact_z(z), params.exact_p)
    return [RQPair(k, float(z), float(R[k]), float(Q[k])) for k in range(k_max + 1)]


def eval_R_derivative(scenario: Scenario, k: int, z: float, params: WalkParams) -> float:
    """``dR_k/dz`` by differentiating the recurrence term by term (float arithmetic)."""
    _check_level(scenario, k, allow_zero=True)
    R, _ = rq_sequence(scenario, k, Dual(float(z), 1.0), params.p)
    return float(R[k].der)


def eval_R_and_derivative(scenario: Scenario, k: int, z: float, params: WalkParams) -> tuple[float, float]:
    R, _ = rq_sequence(scenario, k, Dual(float(z), 1.0), params.p)
    return float(R[k].val), float(R[k].der)


def rq_polynomials(
    scenario: Scenario, k: int, params: WalkParams, exact: bool = False
) -> tuple[list[Any], list[Any]]:
    """Coefficient lists (constant term first) of ``R_k`` and ``Q_k``."""
    _check_level(scenario, k, allow_zero=True)
    if exact:
        z, p = Poly.z(Fraction(1)), params.exact_p
    else:
        z, p = Poly.z(1.0), params.p
    R, Q = rq_sequence(scenario, k, z, p)
    return R[k].trimmed(), Q[k].trimmed()


def _check_level(scenario: Scenario, k: int, allow_zero: bool = False) -> None:
    scenario.require_exact()
    if int(k) != k or k < 0:
        raise ParamError(f"level must be a nonnegative integer, got {k!r}")
    if not allow_zero and k < min_level(scenario):
        raise ParamError(f"level {k} is below the first transfer matrix for {scenario.label()}")


# --------------------------------------------------------------------------
# closed forms


BRANCH_GUARD = 1e-6


def branch_point(scenario: Scenario, params: WalkParams) -> float:
    """Positive ``z`` where the square-root variable ``t`` vanishes."""
    pq = params.p * params.q
    if scenario.is_traffic:
        return 1.0 / (4.0 * pq)
    return 1.0 / (2.0 * math.sqrt(pq))


def _closed_precision(scenario: Scenario, k: int, params: WalkParams, z: Fraction) -> int:
    expo = 2 if scenario.is_traffic else 1
    bits = 96 + math.ceil(expo * (k + 2) * (math.log2(params.ratio) + 1.0))
    gap = abs(float(z) - 1.0)
    if gap > 0:
        bits += max(0, math.ceil(-math.log2(gap)))
    else:
        bits += 64
    return bits


def eval_RQ_closed(scenario: Scenario, k: int, z: float | Fraction, params: WalkParams) -> RQPair:
    """Evaluate ``R_k(z)``, ``Q_k(z)`` through the explicit ``t, u, v`` solutions.

    ``t = sqrt(1 - 4pqz^2)`` for the walks and ``t = sqrt(1 - 4pqz)`` for
    the traffic queue.  Arithmetic is done in :mod:`mpmath` at a precision
    scaled with ``k``, because the two exponential terms cancel to
    ``(p/q)**k`` relative size near ``z = 1``.  ``Q`` has a removable
    singularity at ``z = 1`` and is not evaluated there.
    """
    _check_level(scenario, k, allow_zero=True)
    if scenario.kind is Kind.STRONG and k == 0:
        return RQPair(0, float(z), 1.0, 1.0)
    zx = _exact_z(z)
    if zx == 1:
        raise ParamError("the closed form for Q_k is singular at z = 1")
    with mpmath.workprec(_closed_precision(scenario, k, params, zx)):
        p = mpmath.mpf(params.exact_p.numerator) / params.exact_p.denominator
        q = 1 - p
        zz = mpmath.mpf(zx.numerator) / zx.denominator
        if scenario.is_traffic:
            t2 = 1 - 4 * p * q * zz
        else:
            t2 = 1 - 4 * p * q * zz * zz
        if t2 < 0:
            raise ParamError("z lies beyond the branch point (t would be imaginary)")
        t = mpmath.sqrt(t2)
        if t < BRANCH_GUARD:
            raise ParamError("z is too close to the t = 0 branch point")

        if scenario.kind is Kind.STRONG:
            u = 1 + t - 2 * q * zz**2
            v = -1 + t + 2 * q * zz**2
            S = u * ((1 + t) / 2) ** k + v * ((1 - t) / 2) ** k
            R = S / (2 * t)
            Q = (S - 2 * t * zz * (p * zz) ** k) / (2 * t * (1 - zz))
        elif scenario.kind is Kind.WEAK:
            u = 1 + t - q * (1 + t) * zz - 2 * p * q * zz**2
            v = -1 + t + q * (1 - t) * zz + 2 * p * q * zz**2
            S = u * ((1 + t) / 2) ** k + v * ((1 - t) / 2) ** k
            R = S / (2 * t)
            Q = (S - 2 * t * (p * zz) ** (k + 1)) / (2 * t * (1 - zz))
        else:
            u = 1 + t - (1 + 3 * p + t + p * t) * q * zz + 2 * p * q**2 * zz**2
            v = -1 + t + (1 + 3 * p - t - p * t) * q * zz - 2 * p * q**2 * zz**2
            lp = (1 - 2 * p * q * zz + t) / 2
            lm = (1 - 2 * p * q * zz - t) / 2

            def tilde(j: int) -> tuple[Any, Any]:
                if j < 0:
                    return mpmath.mpf(1), mpmath.mpf(0)
                s = u * lp**j + v * lm**j
                return s / (2 * t), (s - 2 * t * (p * p * zz) ** (j + 1)) / (2 * t * (1 - zz))

            Rk, Qk = tilde(k)
            if scenario.convention is Convention.BLOCK_END:
                R, Q = Rk, Qk
            else:
                Rm, Qm = tilde(k - 1)
                R = Rk + p * q * zz * Rm
                Q = Qk + p * q * zz * Qm
        return RQPair(k, float(z), float(R), float(Q))


# --------------------------------------------------------------------------
# transfer matrices


@dataclass(frozen=True)
class TransferMatrix:
    """Tridiagonal one-step (or one-block) transition matrix on ``{0..k}``.

    Column ``j`` holds the probabilities of moving out of state ``j``;
    the missing column mass is the chance of exceeding ``k``.
    ``sub[i]`` is entry ``(i, i-1)``, ``sup[i]`` is ``(i, i+1)``.
    """

    k: int
    sub: tuple[Any, ...]
    diag: tuple[Any, ...]
    sup: tuple[Any, ...]

    def dense(self) -> list[list[Any]]:
        size = self.k + 1
        zero = self.diag[0] * 0
        rows = [[zero] * size for _ in range(size)]
        for i in range(size):
            rows[i][i] = self.diag[i]
            if i >= 1:
                rows[i][i - 1] = self.sub[i]
            if i + 1 < size:
                rows[i][i + 1] = self.sup[i]
        return rows

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.array([float(x) for x in self.sub]),
            np.array([float(x) for x in self.diag]),
            np.array([float(x) for x in self.sup]),
        )

    def column_sums(self) -> list[Any]:
        rows = self.dense()
        return [sum(rows[i][j] for i in range(self.k + 1)) for j in range(self.k + 1)]


def build_transfer(scenario: Scenario, k: int, params: WalkParams, exact: bool = False) -> TransferMatrix:
    """Transfer matrix ``A_k`` for the scenario (strong needs ``k >= 1``)."""
    _check_level(scenario, k)
    if exact:
        p = params.exact_p
        one: Any = Fraction(1)
    else:
        p = params.p
        one = 1.0
    q = one - p
    zero = one * 0
    size = k + 1
    kind = scenario.kind
    if kind is Kind.STRONG:
        sub = [zero, one] + [p] * (size - 2)
        diag = [zero] * size
        sup = [q] * (size - 1) + [zero]
    elif kind is Kind.WEAK:
        sub = [zero] + [p] * (size - 1)
        diag = [q] + [zero] * (size - 1)
        sup = [q] * (size - 1) + [zero]
    else:
        sub = [zero] + [p * p] * (size - 1)
        diag = [2 * p * q] * size
        diag[0] = one - p * p
        if scenario.convention is Convention.EVERY_STEP:
            # an arrival at the top level overshoots k before it can be served
            diag[k] = p * q if k > 0 else q
        sup = [q * q] * (size - 1) + [zero]
    return TransferMatrix(k, tuple(sub), tuple(diag), tuple(sup))


@nb.njit(cache=True, nogil=True)
def _tridiag_power_mass(sub, diag, sup, n):  # pragma: no cover - compiled
    size = diag.shape[0]
    v = np.zeros(size)
    w = np.zeros(size)
    v[0] = 1.0
    for _ in range(n):
        for i in range(size):
            acc = diag[i] * v[i]
            if i >= 1:
                acc += sub[i] * v[i - 1]
            if i + 1 < size:
                acc += sup[i] * v[i + 1]
            w[i] = acc
        v, w = w, v
    total = 0.0
    for i in range(size):
        total += v[i]
    return total


def _clamp01(x: float, where: str) -> float:
    if x < -CLAMP_SLACK or x > 1.0 + CLAMP_SLACK or math.isnan(x):
        raise ArithmeticError(f"{where}: probability {x!r} outside [0, 1] beyond rounding slack")
    return min(1.0, max(0.0, x))


def cdf_matrix_power(
    scenario: Scenario,
    params: WalkParams,
    n: Horizon,
    k: int,
    exact: bool | None = None,
    budget: int = DEFAULT_BUDGET,
) -> Fraction | float:
    """``P{M_n <= k} = 1' A_k^n e_0`` by repeated vector-matrix products.

    ``exact=None`` means exact exactly when ``params`` carries a rational
    ``p``.  Raises :class:`BudgetExceeded` when ``n * (k + 1)`` exceeds
    ``budget``.
    """
    _check_level(scenario, k, allow_zero=True)
    steps = natural_length(n, scenario)
    if exact is None:
        exact = params.rational is not None
    one: Fraction | float = Fraction(1) if exact else 1.0
    if steps == 0:
        return one
    if k >= steps:
        return one  # the walk climbs at most one level per step (or block)
    if k < min_level(scenario):
        return one * 0
    if steps * (k + 1) > budget:
        raise BudgetExceeded(
            f"n*(k+1) = {steps * (k + 1):.3g} exceeds the matrix-power budget {budget:.3g}; "
            "use the pole approximation (walkmax asymptotic) instead"
        )
    A = build_transfer(scenario, k, params, exact=exact)
    if exact:
        v: list[Any] = [Fraction(0)] * (k + 1)
        v[0] = Fraction(1)
        for _ in range(steps):
            v = [
                A.diag[i] * v[i]
                + (A.sub[i] * v[i - 1] if i >= 1 else 0)
                + (A.sup[i] * v[i + 1] if i < k else 0)
                for i in range(k + 1)
            ]
        return sum(v, Fraction(0))
    sub, diag, sup = A.as_arrays()
    return _clamp01(float(_tridiag_power_mass(sub, diag, sup, steps)), "cdf_matrix_power")


def matrix_table_cost(scenario: Scenario, n: Horizon, k_max: int) -> int:
    steps = natural_length(n, scenario)
    top = min(k_max, steps - 1)
    return steps * sum(k + 1 for k in range(min_level(scenario), top + 1)) if top >= 0 else 0


# --------------------------------------------------------------------------
# series coefficients


def series_cdf(
    scenario: Scenario, params: WalkParams, k: int, n_max: int, exact: bool = False
) -> list[Any]:
    """``[z^n] Q_k/R_k`` for ``n = 0..n_max``, i.e. ``P{M_n <= k}`` along ``n``.

    Uses ``c_n = (q_n - sum_{j>=1} r_j c_{n-j}) / r_0`` on the exact
    coefficient lists produced by running the recurrences over polynomials.
    """
    _check_level(scenario, k, allow_zero=True)
    if n_max < 0:
        raise ParamError("n_max must be nonnegative")
    if scenario.kind is Kind.STRONG and k == 0:
        one: Any = Fraction(1) if exact else 1.0
        return [one] + [one * 0] * n_max
    r, qc = rq_polynomials(scenario, k, params, exact=True)
    if exact:
        return _coefficient_recursion(r, qc, n_max, Fraction(0))
    # double-rounded coefficients shift the near-1 root enough to spoil the
    # tail, so the recursion runs in extended precision from exact coefficients
    expo = 2 if scenario.is_traffic else 1
    bits = 64 + math.ceil(expo * (k + 2) * (math.log2(params.ratio) + 1.0)) + n_max.bit_length()
    with mpmath.workprec(bits):
        c = _coefficient_recursion(
            [mpmath.mpf(x.numerator) / x.denominator for x in r],
            [mpmath.mpf(x.numerator) / x.denominator for x in qc],
            n_max,
            mpmath.mpf(0),
        )
        return [float(x) for x in c]


def _coefficient_recursion(r: list[Any], qc: list[Any], n_max: int, zero: Any) -> list[Any]:
    c: list[Any] = []
    for m in range(n_max + 1):
        acc = qc[m] if m < len(qc) else zero
        for j in range(1, min(m, len(r) - 1) + 1):
            acc -= r[j] * c[m - j]
        c.append(acc / r[0])
    return c


# --------------------------------------------------------------------------
# tables and moments


@dataclass(frozen=True)
class DistributionTable:
    """CDF of ``M_n`` over ``k = 0..len(cdf)-1`` for a fixed horizon."""

    scenario: Scenario
    params: WalkParams
    n: TimeIndex
    cdf: tuple[Any, ...]
    method: str
    pmf: tuple[Any, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pmf", tuple(pmf_from_cdf(self.cdf)))

    @property
    def k_values(self) -> range:
        return range(len(self.cdf))


def pmf_from_cdf(cdf: Sequence[Any]) -> list[Any]:
    out = []
    prev: Any = cdf[0] * 0 if cdf else 0
    for value in cdf:
        d = value - prev
        if isinstance(d, float):
            if d < -CLAMP_SLACK:
                raise ArithmeticError(f"CDF decreases by {-d!r}")
            d = max(d, 0.0)
        out.append(d)
        prev = value
    return out


def default_k_max(scenario: Scenario, params: WalkParams, n: Horizon) -> int:
    """Level beyond which ``1 - P{M_n <= k}`` is below double-precision resolution."""
    steps = natural_length(n, scenario)
    if steps == 0:
        return 0
    expo = 2 if scenario.is_traffic else 1
    log_r = expo * params.log_ratio
    guess = math.log(steps) / log_r + 40.0 / log_r + 3
    return int(min(steps, math.ceil(guess)))


METHODS = ("matrix", "series", "brute-force", "pole", "gumbel", "auto")


def distribution(
    scenario: Scenario,
    params: WalkParams,
    n: Horizon,
    k_max: int | None = None,
    method: str = "auto",
    exact: bool = False,
    budget: int = DEFAULT_BUDGET,
) -> DistributionTable:
    """Build the CDF/PMF table of ``M_n`` for ``k = 0..k_max`` with the chosen method.

    ``auto`` uses matrix powers when the whole table fits ``budget`` and the
    dominant-pole approximation otherwise.
    """
    if method not in METHODS:
        raise ParamError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    t = as_time_index(n, scenario)
    steps = natural_length(t, scenario)
    if k_max is None:
        k_max = default_k_max(scenario, params, t)
    if method == "auto":
        method = "matrix" if matrix_table_cost(scenario, t, k_max) <= budget else "pole"

    if method == "matrix":
        if matrix_table_cost(scenario, t, k_max) > budget:
            raise BudgetExceeded(
                "matrix-power table exceeds the budget; use method 'pole' or the asymptotic command"
            )
        cdf = [cdf_matrix_power(scenario, params, t, k, exact=exact, budget=budget) for k in range(k_max + 1)]
    elif method == "series":
        cdf = [series_cdf(scenario, params, k, steps, exact=exact)[steps] for k in range(k_max + 1)]
        if not exact:
            cdf = [_clamp01(float(x), "series_cdf") for x in cdf]
    elif method == "brute-force":
        from .bruteforce import brute_force_table

        cdf = list(brute_force_table(scenario, params, t, k_max))
        if not exact:
            cdf = [float(x) for x in cdf]
    else:
        from . import asymptotics

        fn = asymptotics.pole_cdf if method == "pole" else asymptotics.gumbel_cdf
        cdf = [fn(scenario, params, t, k) for k in range(k_max + 1)]
    return DistributionTable(scenario, params, t, tuple(cdf), method)


pmf = distribution


@dataclass(frozen=True)
class Moments:
    mean: float
    mean_square: float
    variance: float

    @property
    def stddev(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


def exact_moments(
    scenario: Scenario,
    params: WalkParams,
    n: Horizon,
    cdf_source: str | Callable[[int], Any] = "auto",
    budget: int = DEFAULT_BUDGET,
) -> Moments:
    """Mean, mean square and variance of ``M_n`` from tail sums of a CDF.

    ``mean = sum_k (1 - F(k))`` and ``E[M^2] = sum_k (2k+1)(1 - F(k))``,
    truncated once ``1 - F(k) < 1e-15`` (or past :func:`default_k_max` for the
    built-in sources).  ``cdf_source`` is ``"matrix"``,
    ``"pole"``, ``"auto"`` or a callable ``k -> F(k)``.
    """
    t = as_time_index(n, scenario)
    steps = natural_length(t, scenario)
    if steps == 0:
        return Moments(0.0, 0.0, 0.0)
    # float matrix mass plateaus near 1 - n*eps, so built-in sources stop at the
    # level where the true tail is already below double resolution
    k_stop = steps
    if callable(cdf_source):
        F = cdf_source
    else:
        k_stop = default_k_max(scenario, params, t)
        source = cdf_source
        if source == "auto":
            k_guess = default_k_max(scenario, params, t)
            source = "matrix" if matrix_table_cost(scenario, t, k_guess) <= budget else "pole"
        if source == "matrix":
            F = lambda k: cdf_matrix_power(scenario, params, t, k, exact=False, budget=budget)  # noqa: E731
        elif source == "pole":
            from .asymptotics import pole_cdf

            F = lambda k: pole_cdf(scenario, params, t, k)  # noqa: E731
        else:
            raise ParamError(f"unknown CDF source {cdf_source!r}")

    mean = 0.0
    second = 0.0
    k = 0
    while True:
        tail = 1.0 - float(F(k))
        if tail < TAIL_EPS:
            break
        mean += tail
        second += (2 * k + 1) * tail
        k += 1
        if k > k_stop:
            if k_stop < steps:
                break
            raise ArithmeticError("CDF never reaches 1 within k <= n; inconsistent source")
    return Moments(mean, second, second - mean * mean)
