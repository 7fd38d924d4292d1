"""Cross-method comparison reports and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .asymptotics import (
    FLUCTUATION_BAND,
    asymptotic_mean,
    asymptotic_variance,
    gumbel_cdf,
    limit_constant,
    pole_cdf,
)
from .exact import (
    DEFAULT_BUDGET,
    cdf_matrix_power,
    default_k_max,
    exact_moments,
    matrix_table_cost,
    pmf_from_cdf,
)
from .model import Scenario, TimeIndex, WalkParams
from .montecarlo import RNG_ID, EnsembleStats, Histogram, SimConfig

SCHEMA = 1
TOOL = "walkmax"
DKW_FACTOR = 4.0
DKW_SLACK = 1e-3
MEAN_SEM_FACTOR = 3.0
MEAN_FLOOR = 0.03
MISMATCH_SEM_FACTOR = 5.0


def fmt(x: Any) -> str:
    """Probabilities and moments in CSV: 17 significant digits; blanks for missing."""
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def dkw_halfwidth(F: float, trials: int) -> float:
    return DKW_FACTOR * math.sqrt(max(F * (1.0 - F), 0.0) / trials) + DKW_SLACK


def base_metadata(
    scenario: Scenario, params: WalkParams, n: int, unit: str, flags: dict[str, Any] | None = None
) -> dict[str, Any]:
    meta: dict[str, Any] = {
        "schema": SCHEMA,
        "tool": TOOL,
        "version": __version__,
        "scenario": scenario.kind.value,
        "ell": scenario.ell,
        "max_convention": scenario.convention.value if scenario.is_traffic else None,
        "p": params.render(),
        "p_decimal": params.decimal(),
        "n": n,
        "unit": unit,
    }
    if flags is not None:
        meta["flags"] = {k: v for k, v in sorted(flags.items()) if k != "workers"}
    return meta


@dataclass
class ComparisonReport:
    metadata: dict[str, Any]
    rows: list[dict[str, Any]]
    summary: dict[str, Any]
    checks: list[dict[str, Any]] = field(default_factory=list)

    @property
    def theory_mismatch(self) -> bool:
        return bool(self.summary.get("theory_mismatch", False))

    @property
    def passed(self) -> bool:
        """True when every enforced band holds; overlay-only checks never fail the report."""
        return all(c["passed"] for c in self.checks if c["enforced"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "metadata": self.metadata,
            "summary": self.summary,
            "checks": self.checks,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ComparisonReport:
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        return cls(data["metadata"], data["rows"], data["summary"], data["checks"])

    @classmethod
    def from_json(cls, text: str) -> ComparisonReport:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        return table_csv(ROW_COLUMNS, self.rows, self.metadata)

    def figure_csv(self) -> str:
        """Per-level empirical frequency beside the theoretical pmf, for overlay plots."""
        rows = [
            {
                "k": r["k"],
                "frequency": r["pmf_empirical"],
                "pmf_theory": r["pmf_exact"] if r["pmf_exact"] is not None else r["pmf_pole"],
                "pmf_gumbel": r["pmf_gumbel"],
            }
            for r in self.rows
        ]
        return table_csv(["k", "frequency", "pmf_theory", "pmf_gumbel"], rows, self.metadata)


ROW_COLUMNS = [
    "k",
    "cdf_exact",
    "cdf_pole",
    "cdf_gumbel",
    "cdf_empirical",
    "pmf_exact",
    "pmf_pole",
    "pmf_gumbel",
    "pmf_empirical",
    "count",
    "band",
]


def dumps(obj: Any) -> str:
    # repr-exact floats and sorted keys make the text a pure function of the data
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def table_csv(columns: list[str], rows: list[dict[str, Any]], metadata: dict[str, Any] | None) -> str:
    buf = io.StringIO()
    if metadata is not None:
        buf.write(f"# {json.dumps(metadata, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


# --------------------------------------------------------------------------


def _check(name: str, passed: bool, enforced: bool, **detail: Any) -> dict[str, Any]:
    return {"name": name, "passed": bool(passed), "enforced": enforced, **detail}


def build_comparison(
    cfg: SimConfig,
    hist: Histogram,
    stats: EnsembleStats,
    flags: dict[str, Any] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> ComparisonReport:
    """Compare a simulated ensemble with the exact, pole and Gumbel distributions.

    For traffic with ``ell >= 2`` there is no theory; the ``ell = 1`` queue
    with the same maximum convention is overlaid instead and disagreement is
    reported as ``theory_mismatch`` rather than as a failure.
    """
    scenario = cfg.scenario
    overlay_only = scenario.is_traffic and scenario.ell != 1
    theory = Scenario.traffic(1, scenario.convention) if overlay_only else scenario
    steps = cfg.effective_n
    if steps < 1:
        raise ValueError("comparison undefined: horizon is shorter than one signal cycle")
    horizon = TimeIndex(steps, "steps")
    params = cfg.params
    if theory.is_traffic and steps < theory.block_steps:
        raise ValueError("comparison undefined: horizon is shorter than one signal cycle")

    k_top = max(default_k_max(theory, params, horizon), hist.max_level)
    with_exact = matrix_table_cost(theory, horizon, k_top) <= budget
    cdf_exact = (
        [cdf_matrix_power(theory, params, horizon, k, exact=False, budget=budget) for k in range(k_top + 1)]
        if with_exact
        else None
    )
    cdf_pole = [pole_cdf(theory, params, horizon, k) for k in range(k_top + 1)]
    cdf_gum = [gumbel_cdf(theory, params, horizon, k) for k in range(k_top + 1)]
    cdf_emp = hist.empirical_cdf(k_top)
    reference = cdf_exact if cdf_exact is not None else cdf_pole

    pmf_exact = pmf_from_cdf(cdf_exact) if cdf_exact is not None else None
    pmf_pole = pmf_from_cdf(cdf_pole)
    pmf_gum = pmf_from_cdf(cdf_gum)
    pmf_emp = pmf_from_cdf(cdf_emp)
    trials = hist.trials

    rows = []
    worst_excess = -math.inf
    worst_k = None
    for k in range(k_top + 1):
        band = dkw_halfwidth(reference[k], trials)
        excess = abs(cdf_emp[k] - reference[k]) - band
        if excess > worst_excess:
            worst_excess, worst_k = excess, k
        rows.append(
            {
                "k": k,
                "cdf_exact": cdf_exact[k] if cdf_exact is not None else None,
                "cdf_pole": cdf_pole[k],
                "cdf_gumbel": cdf_gum[k],
                "cdf_empirical": cdf_emp[k],
                "pmf_exact": pmf_exact[k] if pmf_exact is not None else None,
                "pmf_pole": pmf_pole[k],
                "pmf_gumbel": pmf_gum[k],
                "pmf_empirical": pmf_emp[k],
                "count": hist.counts.get(k, 0),
                "band": band,
            }
        )

    moments = exact_moments(theory, params, horizon, cdf_source=lambda k: reference[k] if k <= k_top else 1.0)
    asym_mean = asymptotic_mean(theory, params, horizon) if steps >= 2 else None
    asym_var = asymptotic_variance(theory, params)
    lim = limit_constant(theory, params, "steps")
    mean_tol = max(MEAN_SEM_FACTOR * stats.standard_error_of_mean, MEAN_FLOOR)
    sem = stats.standard_error_of_mean

    enforced = not overlay_only
    checks = [
        _check(
            "cdf_band",
            worst_excess <= 0.0,
            enforced,
            worst_k=worst_k,
            worst_excess=worst_excess,
            reference="exact" if with_exact else "pole",
        ),
        _check(
            "mean_band",
            abs(stats.mean - moments.mean) <= mean_tol,
            enforced,
            difference=stats.mean - moments.mean,
            tolerance=mean_tol,
        ),
    ]
    summary: dict[str, Any] = {
        "empirical": {
            "mean": stats.mean,
            "mean_square": stats.mean_square,
            "stddev": stats.stddev,
            "variance": stats.stddev**2,
            "sem": sem,
            "trials": trials,
            "min_level": hist.min_level,
            "max_level": hist.max_level,
        },
        "theory": {
            "source": "exact" if with_exact else "pole",
            "mean": moments.mean,
            "mean_square": moments.mean_square,
            "variance": moments.variance,
        },
        "asymptotic": {
            "c": lim.c,
            "r": lim.r,
            "mean": asym_mean,
            "variance": asym_var,
            "fluctuation_band": FLUCTUATION_BAND,
        },
        "residuals": {
            "theory_mean_minus_asymptotic": None if asym_mean is None else moments.mean - asym_mean,
            "theory_variance_minus_asymptotic": moments.variance - asym_var,
            "empirical_mean_minus_theory": stats.mean - moments.mean,
            "empirical_mean_minus_asymptotic": None if asym_mean is None else stats.mean - asym_mean,
        },
        "overlay": theory.label(),
        "theory_mismatch": False,
    }
    if overlay_only:
        z = math.inf if sem == 0 else abs(stats.mean - (asym_mean or 0.0)) / sem
        summary["asymptotic_mean_z"] = z
        summary["theory_mismatch"] = (
            z > MISMATCH_SEM_FACTOR or not all(c["passed"] for c in checks)
        )

    meta = base_metadata(scenario, params, cfg.n, "steps", flags)
    meta.update(
        {
            "effective_n": steps,
            "truncated": cfg.truncated,
            "trials": cfg.trials,
            "seed": cfg.base_seed,
            "rng": RNG_ID,
        }
    )
    return ComparisonReport(meta, rows, summary, checks)


def histogram_rows(hist: Histogram) -> list[dict[str, Any]]:
    total = hist.trials
    return [{"k": k, "count": c, "frequency": c / total} for k, c in sorted(hist.counts.items())]


def stats_dict(stats: EnsembleStats) -> dict[str, float]:
    return {
        "mean": stats.mean,
        "mean_square": stats.mean_square,
        "stddev": stats.stddev,
        "sem": stats.standard_error_of_mean,
    }
