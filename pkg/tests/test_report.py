import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from walkmax.cli import main
from walkmax.model import Scenario, validate_params
from walkmax.montecarlo import SimConfig, run_ensemble
from walkmax.report import ComparisonReport, base_metadata, build_comparison, dkw_halfwidth, fmt, table_csv


@pytest.fixture(scope="module")
def strong_report():
    cfg = SimConfig(Scenario.strong(), validate_params("1/3"), 3000, 20000, base_seed=5, workers=2)
    hist, stats = run_ensemble(cfg)
    return build_comparison(cfg, hist, stats, {"workers": 2, "seed": 5})


@pytest.fixture(scope="module")
def mislabelled_report():
    # weak-walk maxima judged against the strong theory
    params = validate_params("1/3")
    weak = SimConfig(Scenario.weak(), params, 3000, 20000, base_seed=5)
    hist, stats = run_ensemble(weak)
    strong = SimConfig(Scenario.strong(), params, 3000, 20000, base_seed=5)
    return build_comparison(strong, hist, stats)


def test_fmt_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(None) == "" and fmt(3) == "3"


@given(st.floats(min_value=0, max_value=1), st.integers(min_value=1, max_value=10**7))
def test_dkw_halfwidth_bounds(F, trials):
    w = dkw_halfwidth(F, trials)
    assert 1e-3 <= w <= 1e-3 + 2 / math.sqrt(trials) + 1e-12


def test_metadata_drops_workers():
    meta = base_metadata(Scenario.weak(), validate_params("1/4"), 10, "steps", {"workers": 8, "seed": 1})
    assert meta["flags"] == {"seed": 1}
    assert meta["max_convention"] is None


def test_csv_header_line_is_metadata():
    text = table_csv(["a"], [{"a": 0.5}], {"x": 1})
    assert text.splitlines() == ['# {"x": 1}', "a", "0.5"]


def test_report_passes_and_columns_are_cdfs(strong_report):
    assert strong_report.passed
    assert strong_report.summary["theory"]["source"] == "exact"
    for col in ("cdf_exact", "cdf_pole", "cdf_gumbel", "cdf_empirical"):
        values = [r[col] for r in strong_report.rows]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(b >= a for a, b in zip(values, values[1:]))


def test_report_json_round_trip(strong_report):
    text = strong_report.to_json()
    again = ComparisonReport.from_json(text)
    assert again.to_json() == text
    assert again.to_csv() == strong_report.to_csv()


def test_report_rejects_other_schema(strong_report):
    doc = strong_report.to_dict()
    doc["schema"] = 99
    with pytest.raises(ValueError):
        ComparisonReport.from_dict(doc)


def test_mislabelled_ensemble_fails_bands(mislabelled_report):
    assert not mislabelled_report.passed
    assert not mislabelled_report.theory_mismatch


def test_band_failure_exit_two(mislabelled_report, tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(mislabelled_report.to_json())
    assert main(["show", str(path)]) == 2
    assert json.loads(capsys.readouterr().out)["checks"][0]["passed"] is False


def test_pole_reference_beyond_budget():
    cfg = SimConfig(Scenario.weak(), validate_params("1/5"), 5000, 2000, base_seed=1)
    hist, stats = run_ensemble(cfg)
    report = build_comparison(cfg, hist, stats, budget=1000)
    assert report.summary["theory"]["source"] == "pole"
    assert all(r["cdf_exact"] is None for r in report.rows)
    assert report.checks[0]["reference"] == "pole"
