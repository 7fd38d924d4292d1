"""Safeguarded Newton iteration on a sign-changing bracket."""

from __future__ import annotations

import math
from typing import Callable


class RootError(RuntimeError):
    """Bracket does not change sign, or the iteration did not converge."""


def newton_bisect(
    func: Callable[[float], tuple[float, float]],
    lo: float,
    hi: float,
    rtol: float = 1e-14,
    atol: float = 0.0,
    maxit: int = 200,
) -> tuple[float, int]:
    """Find a root of ``func`` inside ``[lo, hi]``.

    Newton steps are taken while they stay inside the current bracket and
    shrink the step at least geometrically; otherwise the bracket is
    bisected.  The bracket is tightened on every evaluation, so the
    iteration cannot leave it.

    Parameters
    ----------
    func : callable
        Returns ``(f(x), f'(x))``.
    lo, hi : float
        Bracket endpoints; ``f(lo)`` and ``f(hi)`` must differ in sign.
    rtol, atol : float
        Stop when the last step is below ``atol + rtol * |x|``.
    maxit : int
        Iteration cap.

    Returns
    -------
    x : float
        The root.
    iterations : int
        Number of iterations used.
    """
    f_lo, _ = func(lo)
    f_hi, _ = func(hi)
    if f_lo == 0.0:
        return lo, 0
    if f_hi == 0.0:
        return hi, 0
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise RootError(f"no sign change on [{lo!r}, {hi!r}]: f = ({f_lo!r}, {f_hi!r})")
    # orient so that f(a) < 0 < f(b)
    a, b = (lo, hi) if f_lo < 0 else (hi, lo)

    x = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    f, df = func(x)
    for it in range(1, maxit + 1):
        newton_ok = df != 0.0 and ((x - b) * df - f) * ((x - a) * df - f) < 0.0
        if newton_ok and abs(2.0 * f) <= abs(dx_old * df):
            dx_old = dx
            dx = f / df
            x_new = x - dx
        else:
            dx_old = dx
            dx = 0.5 * (b - a)
            x_new = a + dx
        if abs(dx) <= atol + rtol * abs(x_new) or x_new == x:
            return x_new, it
        x = x_new
        f, df = func(x)
        if f == 0.0:
            return x, it
        if f < 0.0:
            a = x
        else:
            b = x
    raise RootError(f"no convergence after {maxit} iterations (last x = {x!r})")
