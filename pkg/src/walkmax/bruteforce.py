"""Path-enumeration oracle for ``P{M_n <= k}``.

Every step of every model is a two-way choice whose first branch has
probability ``p`` (an up-step, or an arrival in the red phase, or "no
departure" in the green phase).  A path with ``a`` such branches out of
``N`` steps has probability ``p**a * q**(N - a)``, so one enumeration gives
a table ``counts[a, m]`` (paths with ``a`` p-branches and maximum ``m``)
that serves every ``p`` and every ``k`` exactly.

The dynamics here are written straight from the model definitions and share
no code with the transfer matrices.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

from .model import Convention, Horizon, Kind, ParamError, Scenario, WalkParams, as_time_index

MAX_BRUTE_STEPS = 24


def _steps_for(scenario: Scenario, n: Horizon) -> tuple[int, int]:
    t = as_time_index(n, scenario)
    if scenario.is_traffic:
        if t.unit == "steps":
            blocks = t.n // scenario.block_steps
        else:
            blocks = t.n
        return blocks * scenario.block_steps, blocks
    return t.n, t.n


def enumerate_paths(scenario: Scenario, n_steps: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(j, counts_j)`` for ``j = 0..n_steps`` where ``counts_j[a, m]`` tallies paths of length ``j``.

    The maximum convention for traffic only affects which time points feed
    the running maximum; partial cycles are reported as they stand.
    """
    if n_steps > MAX_BRUTE_STEPS:
        raise ParamError(f"brute force is limited to {MAX_BRUTE_STEPS} steps (2**n paths), got {n_steps}")
    S = np.zeros(1, dtype=np.int16)
    M = np.zeros(1, dtype=np.int16)
    A = np.zeros(1, dtype=np.int16)
    yield 0, _tally(A, M, 0)
    ell = scenario.ell
    for j in range(1, n_steps + 1):
        if scenario.kind is Kind.STRONG:
            s_p = np.abs(S + 1)
            s_q = np.abs(S - 1)
        elif scenario.kind is Kind.WEAK:
            s_p = np.maximum(S + 1, 0)
            s_q = np.maximum(S - 1, 0)
        else:
            red = (j - 1) % (2 * ell) < ell
            if red:
                s_p, s_q = S + 1, S.copy()  # arrival w.p. p
            else:
                s_p, s_q = S.copy(), np.maximum(S - 1, 0)  # departure w.p. q
        S = np.concatenate([s_p, s_q])
        A = np.concatenate([A + 1, A])
        record = (
            not scenario.is_traffic
            or scenario.convention is Convention.EVERY_STEP
            or j % (2 * ell) == 0
        )
        M = np.concatenate([M, M])
        if record:
            M = np.maximum(M, S)
        yield j, _tally(A, M, j)


def _tally(A: np.ndarray, M: np.ndarray, j: int) -> np.ndarray:
    width = int(M.max()) + 1
    counts = np.zeros((j + 1, width), dtype=np.int64)
    np.add.at(counts, (A.astype(np.int64), M.astype(np.int64)), 1)
    return counts


@lru_cache(maxsize=64)
def _counts(scenario: Scenario, n_steps: int) -> np.ndarray:
    last = None
    for _, counts in enumerate_paths(scenario, n_steps):
        last = counts
    assert last is not None
    return last


def cdf_from_counts(counts: np.ndarray, params: WalkParams, k_max: int) -> list[Fraction]:
    n_steps = counts.shape[0] - 1
    p, q = params.exact_p, params.exact_q
    weights = [p**a * q ** (n_steps - a) for a in range(n_steps + 1)]
    per_level = [
        sum((int(counts[a, m]) * weights[a] for a in range(n_steps + 1)), Fraction(0))
        for m in range(counts.shape[1])
    ]
    out = []
    running = Fraction(0)
    for k in range(k_max + 1):
        if k < len(per_level):
            running += per_level[k]
        out.append(running)
    return out


def brute_force_table(scenario: Scenario, params: WalkParams, n: Horizon, k_max: int) -> list[Fraction]:
    """Exact ``P{M_n <= k}`` for ``k = 0..k_max`` by enumerating all ``2**steps`` paths.

    ``n`` follows the library convention: plain integers are blocks for the
    traffic queue (one red+green cycle each) and steps for the walks.
    """
    n_steps, _ = _steps_for(scenario, n)
    return cdf_from_counts(_counts(scenario, n_steps), params, k_max)


def brute_force_cdf(scenario: Scenario, params: WalkParams, n: Horizon, k: int) -> Fraction:
    """Exact rational ``P{M_n <= k}`` from path enumeration."""
    if k < 0:
        raise ParamError("k must be nonnegative")
    return brute_force_table(scenario, params, n, k)[k]
