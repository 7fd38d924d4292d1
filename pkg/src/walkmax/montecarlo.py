"""Streaming Monte Carlo of walk and queue maxima.

Each trial owns an independent xoshiro256** generator whose 256-bit state
is derived from ``(base_seed, trial_index)`` with splitmix64, so results
depend only on the seed and the trial count, never on how trials are split
across workers.  Kernels are numba-compiled, release the GIL, and keep O(1)
state per trial (current level and running maximum).
"""

from __future__ import annotations

import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numba as nb
import numpy as np

from .model import Convention, Kind, ParamError, Scenario, WalkParams

RNG_ID = "xoshiro256**/splitmix64(base_seed, trial)"
WORKERS_ENV = "WALKMAX_WORKERS"
LARGE_N = 10**8
# measured single-core throughput of the kernels, used only for runtime estimates
STEPS_PER_SECOND = 3.5e8

_U64 = nb.uint64
_MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------
# generator


@nb.njit(inline="always")
def _rotl(x, k):  # pragma: no cover - compiled
    return (x << _U64(k)) | (x >> _U64(64 - k))


@nb.njit(inline="always")
def _splitmix(x):  # pragma: no cover - compiled
    x = x + _U64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return x, z ^ (z >> _U64(31))


@nb.njit(cache=True)
def _trial_state(base_seed, trial):  # pragma: no cover - compiled
    # mix the trial counter through one splitmix round before seeding
    _, key = _splitmix(_U64(base_seed) ^ (_U64(trial) * _U64(0xD1B54A32D192ED03)))
    x = key
    x, s0 = _splitmix(x)
    x, s1 = _splitmix(x)
    x, s2 = _splitmix(x)
    x, s3 = _splitmix(x)
    return s0, s1, s2, s3


@nb.njit(cache=True)
def _xoshiro_block(base_seed, trial, out):  # pragma: no cover - compiled
    s0, s1, s2, s3 = _trial_state(base_seed, trial)
    for i in range(out.shape[0]):
        out[i] = _rotl(s1 * _U64(5), 7) * _U64(9)
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)


def xoshiro_outputs(base_seed: int, trial: int, count: int) -> np.ndarray:
    """First ``count`` raw 64-bit outputs of one trial's generator (exposed for testing)."""
    out = np.empty(count, dtype=np.uint64)
    _xoshiro_block(np.uint64(base_seed & _MASK64), np.uint64(trial), out)
    return out


def trial_state(base_seed: int, trial: int) -> tuple[int, int, int, int]:
    """The 256-bit starting state of one trial's generator."""
    return tuple(int(v) & _MASK64 for v in _trial_state(np.uint64(base_seed & _MASK64), np.uint64(trial)))


# --------------------------------------------------------------------------
# kernels
#
# A step draws u = (x >> 11) / 2**53 and takes the p-branch iff u < p, which
# is the same as comparing the 53-bit integer against floor(p * 2**53) with
# ties broken by the fractional part; the threshold below is ceil(p * 2**53).

_STRONG, _WEAK, _TRAFFIC = 0, 1, 2


@nb.njit(cache=True, nogil=True)
def _run_trials(model, ell, every_step, n, thr, base_seed, first, out):  # pragma: no cover - compiled
    for i in range(out.shape[0]):
        s0, s1, s2, s3 = _trial_state(base_seed, _U64(first + i))
        level = 0
        top = 0
        if model == _TRAFFIC:
            cycles = n // (2 * ell)
            for _ in range(cycles):
                for _r in range(ell):
                    x = _rotl(s1 * _U64(5), 7) * _U64(9)
                    t = s1 << _U64(17)
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= t
                    s3 = _rotl(s3, 45)
                    level += np.int64((x >> _U64(11)) < thr)
                    if every_step:
                        top = max(top, level)
                for _g in range(ell):
                    x = _rotl(s1 * _U64(5), 7) * _U64(9)
                    t = s1 << _U64(17)
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= t
                    s3 = _rotl(s3, 45)
                    level = max(level - np.int64((x >> _U64(11)) >= thr), 0)
                top = max(top, level)
        else:
            for _ in range(n):
                x = _rotl(s1 * _U64(5), 7) * _U64(9)
                t = s1 << _U64(17)
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= t
                s3 = _rotl(s3, 45)
                step = 1 - 2 * np.int64((x >> _U64(11)) >= thr)
                if model == _STRONG:
                    level = abs(level + step)
                else:
                    level = max(level + step, 0)
                top = max(top, level)
        out[i] = top


def _threshold(p: float) -> np.uint64:
    return np.uint64(math.ceil(p * 2.0**53))


def _model_code(scenario: Scenario) -> int:
    return {Kind.STRONG: _STRONG, Kind.WEAK: _WEAK, Kind.TRAFFIC: _TRAFFIC}[scenario.kind]


# --------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo ensemble.  ``n`` counts single time steps."""

    scenario: Scenario
    params: WalkParams
    n: int
    trials: int
    base_seed: int = 0
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ParamError("trials must be >= 1")
        if self.n < 1:
            raise ParamError("n must be >= 1")
        if not 0 <= self.base_seed <= _MASK64:
            raise ParamError("base_seed must fit in 64 bits")

    @property
    def max_convention(self) -> Convention:
        return self.scenario.convention

    @property
    def effective_n(self) -> int:
        """Steps actually simulated: traffic horizons are cut to whole signal cycles."""
        if self.scenario.is_traffic:
            return (self.n // self.scenario.block_steps) * self.scenario.block_steps
        return self.n

    @property
    def truncated(self) -> bool:
        return self.effective_n != self.n


@dataclass
class Histogram:
    """Counts of the observed maximum by level."""

    counts: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_values(cls, values: np.ndarray) -> Histogram:
        binned = np.bincount(np.asarray(values, dtype=np.int64))
        return cls({int(k): int(c) for k, c in enumerate(binned) if c})

    @property
    def trials(self) -> int:
        return sum(self.counts.values())

    @property
    def min_level(self) -> int:
        return min(self.counts)

    @property
    def max_level(self) -> int:
        return max(self.counts)

    def merge(self, other: Histogram) -> Histogram:
        merged = dict(self.counts)
        for k, c in other.counts.items():
            merged[k] = merged.get(k, 0) + c
        return Histogram(dict(sorted(merged.items())))

    def frequencies(self) -> dict[int, float]:
        total = self.trials
        return {k: c / total for k, c in sorted(self.counts.items())}

    def empirical_cdf(self, k_max: int | None = None) -> list[float]:
        top = self.max_level if k_max is None else k_max
        total = self.trials
        out, running = [], 0
        for k in range(top + 1):
            running += self.counts.get(k, 0)
            out.append(running / total)
        return out


@dataclass(frozen=True)
class EnsembleStats:
    mean: float
    mean_square: float
    stddev: float
    standard_error_of_mean: float


def empirical_summary(h: Histogram | Mapping[int, int]) -> EnsembleStats:
    """Mean, mean square, standard deviation and its standard error from counts.

    The standard deviation is the population one (``mean_square - mean**2``),
    matching the reported mean/mean-square pair.
    """
    counts = h.counts if isinstance(h, Histogram) else dict(h)
    total = sum(counts.values())
    if total == 0:
        raise ParamError("empty histogram")
    s1 = sum(k * c for k, c in counts.items())
    s2 = sum(k * k * c for k, c in counts.items())
    mean = s1 / total
    mean_square = s2 / total
    # exact integer arithmetic for the centred sum avoids negative round-off
    var = (s2 * total - s1 * s1) / (total * total)
    std = math.sqrt(var)
    return EnsembleStats(mean, mean_square, std, std / math.sqrt(total))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ParamError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
        if value < 1:
            raise ParamError(f"{WORKERS_ENV} must be >= 1")
        return value
    return os.cpu_count() or 1


def estimate_seconds(cfg: SimConfig) -> float:
    workers = min(cfg.workers or default_workers(), os.cpu_count() or 1)
    return cfg.effective_n * cfg.trials / (STEPS_PER_SECOND * max(workers, 1))


def _simulate_range(cfg: SimConfig, first: int, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.int64)
    _run_trials(
        _model_code(cfg.scenario),
        cfg.scenario.ell,
        cfg.scenario.convention is Convention.EVERY_STEP,
        cfg.effective_n,
        _threshold(cfg.params.p),
        np.uint64(cfg.base_seed),
        first,
        out,
    )
    return out


def simulate_maxima(cfg: SimConfig) -> np.ndarray:
    """Per-trial maxima in trial order; identical for every ``workers`` value."""
    workers = cfg.workers or default_workers()
    if workers < 1:
        raise ParamError("workers must be >= 1")
    chunks = min(workers, cfg.trials)
    bounds = np.linspace(0, cfg.trials, chunks + 1).astype(np.int64)
    if chunks == 1:
        return _simulate_range(cfg, 0, cfg.trials)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(lambda ab: _simulate_range(cfg, int(ab[0]), int(ab[1] - ab[0])), zip(bounds[:-1], bounds[1:]))
        )
    return np.concatenate(parts)


def simulate_max(scenario: Scenario, params: WalkParams, n: int, seed: int) -> int:
    """One realization of ``M_n`` (``n`` steps), driven by generator stream ``seed``."""
    cfg = SimConfig(scenario, params, n, 1, seed, workers=1)
    return int(_simulate_range(cfg, 0, 1)[0])


def run_ensemble(cfg: SimConfig, progress: bool = False) -> tuple[Histogram, EnsembleStats]:
    """Simulate ``cfg.trials`` independent maxima and summarize them."""
    if progress:
        print(
            f"simulating {cfg.trials} x {cfg.effective_n} steps "
            f"(estimated {estimate_seconds(cfg):.0f} s)",
            file=sys.stderr,
        )
    started = time.perf_counter()
    hist = Histogram.from_values(simulate_maxima(cfg))
    if progress:
        print(f"done in {time.perf_counter() - started:.1f} s", file=sys.stderr)
    return hist, empirical_summary(hist)
