"""``walkmax`` command line: exact, asymptotic, simulate, compare, show.

Exit status: 0 success (or all comparison bands pass), 1 usage or input
error, 2 a comparison band failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Any, Sequence

from .asymptotics import (
    asymptotic_mean,
    asymptotic_variance,
    gumbel_cdf,
    limit_constant,
    pole_cdf,
    root_convergence_table,
)
from .exact import BudgetExceeded, default_k_max, distribution
from .model import ParamError, Scenario, TimeIndex, parse_scenario, validate_params
from .montecarlo import LARGE_N, RNG_ID, WORKERS_ENV, SimConfig, default_workers, estimate_seconds, run_ensemble
from .report import (
    ComparisonReport,
    base_metadata,
    build_comparison,
    dumps,
    histogram_rows,
    stats_dict,
    table_csv,
)
from .rootfind import RootError

EXIT_OK, EXIT_USAGE, EXIT_BAND = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for band failures here
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common(sp: argparse.ArgumentParser, unit: bool = True) -> None:
    sp.add_argument("--scenario", required=True, choices=["strong", "weak", "traffic"])
    sp.add_argument("--p", required=True, help="up/arrival probability, e.g. 1/3 or 0.25 (0 < p < 1/2)")
    sp.add_argument("--n", required=True, type=int, help="horizon")
    if unit:
        sp.add_argument(
            "--unit",
            choices=["steps", "blocks"],
            default="steps",
            help="unit of --n; blocks (one red+green cycle) only for traffic",
        )
    sp.add_argument("--ell", type=int, default=1, help="traffic signal half-period (default 1)")
    sp.add_argument("--max-convention", choices=["every-step", "block-end"], default="every-step")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--output", "-o", help="write here instead of stdout")


def _sim_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--trials", type=int, default=40000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=None, help=f"threads (default ${WORKERS_ENV} or CPU count)")
    sp.add_argument(
        "--confirm-large", action="store_true", help=f"allow n > {LARGE_N:.0e} (prints a runtime estimate first)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="walkmax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("exact", help="exact distribution table of M_n")
    _common(sp)
    sp.add_argument("--kmax", type=int, default=None)
    sp.add_argument("--method", choices=["matrix", "series", "auto"], default="auto")
    sp.add_argument("--rational", action="store_true", help="exact rational arithmetic (requires p as a/b)")

    sp = sub.add_parser("asymptotic", help="Gumbel constants, moment predictions and pole/Gumbel CDFs")
    _common(sp)
    sp.add_argument("--kmax", type=int, default=None)
    sp.add_argument("--k-range", default=None, help="root table levels as a:b (inclusive)")

    for name, text in (("simulate", "Monte Carlo histogram of M_n"), ("compare", "simulation against theory")):
        sp = sub.add_parser(name, help=text)
        _common(sp, unit=False)
        _sim_flags(sp)
        if name == "compare":
            sp.add_argument("--figure-data", help="write the histogram/theory overlay CSV here")

    sp = sub.add_parser("show", help="re-emit a saved JSON report")
    sp.add_argument("report")
    sp.add_argument("--format", choices=["csv", "json", "figure"], default="json")
    sp.add_argument("--output", "-o")
    return parser


# --------------------------------------------------------------------------


def _scenario(args: argparse.Namespace) -> Scenario:
    return parse_scenario(args.scenario, args.ell, args.max_convention)


def _horizon(args: argparse.Namespace, scenario: Scenario) -> TimeIndex:
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    if args.unit == "blocks" and not scenario.is_traffic:
        raise UsageError("--unit blocks only applies to the traffic scenario")
    return TimeIndex(args.n, args.unit)


def _flags(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("output", "format", "figure_data")}


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _value(x: Any) -> Any:
    return f"{x.numerator}/{x.denominator}" if isinstance(x, Fraction) else x


def cmd_exact(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    params = validate_params(args.p)
    horizon = _horizon(args, scenario)
    if args.rational and params.rational is None:
        raise UsageError("--rational needs p given as a fraction a/b")
    method = "matrix" if args.method == "auto" else args.method
    try:
        table = distribution(scenario, params, horizon, args.kmax, method=method, exact=args.rational)
    except BudgetExceeded as exc:
        raise UsageError(f"{exc}; try `walkmax asymptotic` for large horizons") from exc
    rows = [{"k": k, "cdf": _value(c), "pmf": _value(m)} for k, c, m in zip(table.k_values, table.cdf, table.pmf)]
    meta = base_metadata(scenario, params, horizon.n, horizon.unit, _flags(args))
    meta["method"] = table.method
    if args.format == "json":
        _emit(dumps({"schema": 1, "metadata": meta, "rows": rows}), args.output)
    else:
        _emit(table_csv(["k", "cdf", "pmf"], rows, meta), args.output)
    return EXIT_OK


def _k_range(text: str) -> range:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--k-range must look like a:b, got {text!r}") from exc
    return range(a, b + 1)


def cmd_asymptotic(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    params = validate_params(args.p)
    horizon = _horizon(args, scenario)
    if horizon.n < 2:
        raise UsageError("asymptotic predictions need n >= 2")
    lim = limit_constant(scenario, params, horizon.unit)
    k_max = args.kmax if args.kmax is not None else default_k_max(scenario, params, horizon)
    rows = [
        {"k": k, "cdf_gumbel": gumbel_cdf(scenario, params, horizon, k), "cdf_pole": pole_cdf(scenario, params, horizon, k)}
        for k in range(k_max + 1)
    ]
    summary = {
        "c": lim.c,
        "r": lim.r,
        "time_unit": lim.time_unit,
        "mean": asymptotic_mean(scenario, params, horizon),
        "variance": asymptotic_variance(scenario, params),
    }
    roots = None
    if args.k_range:
        roots = [
            {"k": k, "z_k": z, "scaled_gap": g} for k, z, g in root_convergence_table(scenario, params, _k_range(args.k_range))
        ]
    meta = base_metadata(scenario, params, horizon.n, horizon.unit, _flags(args))
    if args.format == "json":
        doc: dict[str, Any] = {"schema": 1, "metadata": meta, "summary": summary, "rows": rows}
        if roots is not None:
            doc["roots"] = roots
        _emit(dumps(doc), args.output)
    else:
        text = "".join(f"# {k}: {v!r}\n" for k, v in summary.items())
        text += table_csv(["k", "cdf_gumbel", "cdf_pole"], rows, meta)
        if roots is not None:
            text += "\n" + table_csv(["k", "z_k", "scaled_gap"], roots, None)
        _emit(text, args.output)
    return EXIT_OK


def _sim_config(args: argparse.Namespace) -> SimConfig:
    scenario = _scenario(args)
    params = validate_params(args.p)
    if args.n < 1:
        raise UsageError("comparison undefined for n < 1" if args.command == "compare" else "--n must be >= 1")
    if args.workers is not None and args.workers < 1:
        raise UsageError("--workers must be >= 1")
    cfg = SimConfig(scenario, params, args.n, args.trials, args.seed, args.workers or default_workers())
    if cfg.effective_n < 1:
        raise UsageError(f"n={args.n} is shorter than one signal cycle ({scenario.block_steps} steps)")
    if args.n > LARGE_N:
        print(f"estimated runtime: {estimate_seconds(cfg):.0f} s", file=sys.stderr)
        if not args.confirm_large:
            raise UsageError(f"n > {LARGE_N:.0e} requires --confirm-large")
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _sim_config(args)
    hist, stats = run_ensemble(cfg)
    meta = base_metadata(cfg.scenario, cfg.params, cfg.n, "steps", _flags(args))
    meta.update(
        {"effective_n": cfg.effective_n, "truncated": cfg.truncated, "trials": cfg.trials, "seed": cfg.base_seed, "rng": RNG_ID}
    )
    rows = histogram_rows(hist)
    if args.format == "json":
        _emit(dumps({"schema": 1, "metadata": meta, "stats": stats_dict(stats), "rows": rows}), args.output)
    else:
        text = "".join(f"# {k}: {v!r}\n" for k, v in stats_dict(stats).items())
        _emit(text + table_csv(["k", "count", "frequency"], rows, meta), args.output)
    return EXIT_OK


def _report_status(report: ComparisonReport) -> int:
    if report.theory_mismatch:
        print(f"theory mismatch against {report.summary['overlay']} (expected, not a failure)", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_BAND


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _sim_config(args)
    hist, stats = run_ensemble(cfg)
    try:
        report = build_comparison(cfg, hist, stats, _flags(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.output)
    if args.figure_data:
        _emit(report.figure_csv(), args.figure_data)
    return _report_status(report)


def cmd_show(args: argparse.Namespace) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            report = ComparisonReport.from_json(fh.read())
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read report {args.report!r}: {exc}") from exc
    text = {"json": report.to_json, "csv": report.to_csv, "figure": report.figure_csv}[args.format]()
    _emit(text, args.output)
    return _report_status(report)


COMMANDS = {
    "exact": cmd_exact,
    "asymptotic": cmd_asymptotic,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "show": cmd_show,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParamError, RootError) as exc:
        print(f"walkmax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
