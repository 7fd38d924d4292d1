import csv
import io
import json

import pytest

from walkmax.cli import main
from walkmax.report import ComparisonReport


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def metadata(text):
    return json.loads(text.splitlines()[0][2:])


def test_exact_strong_two_steps(capsys):
    code, out, _ = run(capsys, "exact", "--scenario", "strong", "--p", "1/3", "--n", "2", "--rational")
    assert code == 0
    assert [(r["k"], r["cdf"], r["pmf"]) for r in rows(out)] == [("0", "0/1", "0/1"), ("1", "2/3", "2/3"), ("2", "1/1", "1/3")]


def test_exact_weak_one_step_float(capsys):
    code, out, _ = run(capsys, "exact", "--scenario", "weak", "--p", "1/3", "--n", "1")
    table = rows(out)
    assert float(table[0]["cdf"]) == pytest.approx(2 / 3, rel=1e-16)
    assert float(table[1]["pmf"]) == pytest.approx(1 / 3, rel=1e-15)
    # 17 significant digits
    assert table[0]["cdf"] == "0.66666666666666674"


def test_exact_traffic_block_end(capsys):
    code, out, _ = run(
        capsys, "exact", "--scenario", "traffic", "--p", "1/3", "--n", "1", "--unit", "blocks",
        "--max-convention", "block-end", "--rational",
    )
    assert [(r["cdf"], r["pmf"]) for r in rows(out)] == [("8/9", "8/9"), ("1/1", "1/9")]


def test_exact_metadata(capsys):
    _, out, _ = run(capsys, "exact", "--scenario", "weak", "--p", "1/4", "--n", "3")
    meta = metadata(out)
    assert meta["p"] == "1/4" and meta["p_decimal"] == "0.25"
    assert meta["schema"] == 1 and meta["version"]


def test_exact_series_json(capsys):
    code, out, _ = run(capsys, "exact", "--scenario", "weak", "--p", "1/5", "--n", "30", "--method", "series", "--format", "json")
    doc = json.loads(out)
    assert doc["metadata"]["method"] == "series"
    assert doc["rows"][-1]["cdf"] == pytest.approx(1.0)


def test_exact_budget_hint(capsys):
    code, _, err = run(capsys, "exact", "--scenario", "strong", "--p", "1/3", "--n", "100000000")
    assert code == 1
    assert "asymptotic" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--scenario", "traffic", "--ell", "2", "--p", "1/3", "--n", "4"],
        ["exact", "--scenario", "strong", "--p", "0.6", "--n", "4"],
        ["exact", "--scenario", "strong", "--p", "1/3", "--n", "4", "--unit", "blocks"],
        ["exact", "--scenario", "strong", "--p", "0.3", "--n", "4", "--rational"],
        ["compare", "--scenario", "strong", "--p", "1/3", "--n", "0", "--trials", "10"],
        ["simulate", "--scenario", "strong", "--p", "1/3", "--n", "200000000", "--trials", "1"],
        ["simulate", "--scenario", "traffic", "--ell", "3", "--p", "1/3", "--n", "5", "--trials", "1"],
        ["asymptotic", "--scenario", "weak", "--p", "1/3", "--n", "1"],
        ["asymptotic", "--scenario", "weak", "--p", "1/3", "--n", "100", "--k-range", "x"],
        ["show", "/nonexistent/report.json"],
    ],
)
def test_usage_errors_exit_one(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--p", "1/3"],
        ["exact", "--scenario", "circle", "--p", "1/3", "--n", "4"],
        ["bogus"],
    ],
)
def test_argparse_errors_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_large_n_prints_estimate(capsys):
    code, _, err = run(capsys, "simulate", "--scenario", "weak", "--p", "1/3", "--n", "1000000000", "--trials", "2")
    assert code == 1
    assert "estimated runtime" in err and "--confirm-large" in err


def test_asymptotic_constants(capsys):
    code, out, _ = run(capsys, "asymptotic", "--scenario", "strong", "--p", "1/3", "--n", "1000000", "--format", "json")
    doc = json.loads(out)
    assert doc["summary"]["c"] == pytest.approx(0.125)
    assert doc["summary"]["r"] == pytest.approx(2.0)
    assert doc["summary"]["variance"] == pytest.approx(3.50705, abs=1e-5)


def test_asymptotic_traffic_and_weak(capsys):
    _, out, _ = run(capsys, "asymptotic", "--scenario", "traffic", "--p", "1/3", "--n", "1000", "--format", "json")
    s = json.loads(out)["summary"]
    assert (s["c"], s["r"]) == (pytest.approx(0.0625), pytest.approx(4.0))
    _, out, _ = run(capsys, "asymptotic", "--scenario", "weak", "--p", "1/5", "--n", "1000", "--format", "json")
    assert json.loads(out)["summary"]["c"] == pytest.approx(9 / 80)


def test_asymptotic_root_table(capsys):
    code, out, _ = run(capsys, "asymptotic", "--scenario", "weak", "--p", "1/3", "--n", "1000", "--k-range", "28:30")
    assert code == 0
    assert "scaled_gap" in out


def test_simulate_single_trial(capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", "strong", "--p", "1/3", "--n", "1", "--trials", "1", "--seed", "4")
    assert code == 0
    assert rows(out) == [{"k": "1", "count": "1", "frequency": "1"}]


def test_simulate_traffic_truncation(capsys):
    _, out, _ = run(
        capsys, "simulate", "--scenario", "traffic", "--ell", "2", "--p", "1/3", "--n", "10", "--trials", "50", "--format", "json"
    )
    meta = json.loads(out)["metadata"]
    assert meta["effective_n"] == 8 and meta["truncated"] is True
    assert meta["rng"].startswith("xoshiro256**")


def test_compare_passes_and_round_trips(capsys, tmp_path):
    report = tmp_path / "r.json"
    fig = tmp_path / "fig.csv"
    code, _, _ = run(
        capsys, "compare", "--scenario", "strong", "--p", "1/3", "--n", "10000", "--trials", "100000", "--seed", "1",
        "--format", "json", "-o", str(report), "--figure-data", str(fig),
    )
    assert code == 0
    first = report.read_text()
    code, out, _ = run(capsys, "show", str(report))
    assert code == 0 and out == first
    parsed = ComparisonReport.from_json(first)
    assert parsed.passed and not parsed.theory_mismatch
    assert parsed.to_json() == first
    fig_rows = rows(fig.read_text())
    assert set(fig_rows[0]) == {"k", "frequency", "pmf_theory", "pmf_gumbel"}
    code, csv_out, _ = run(capsys, "show", str(report), "--format", "csv")
    assert rows(csv_out)[0]["k"] == "0"


def test_compare_ell2_flags_mismatch_but_exits_zero(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, _, err = run(
        capsys, "compare", "--scenario", "traffic", "--ell", "2", "--p", "1/3", "--n", "100000", "--trials", "20000",
        "--format", "json", "-o", str(report),
    )
    assert code == 0
    assert "mismatch" in err
    doc = json.loads(report.read_text())
    assert doc["summary"]["theory_mismatch"] is True
    assert doc["summary"]["overlay"] == "traffic(ell=1, every-step)"


def test_compare_output_independent_of_workers(capsys, tmp_path):
    texts = []
    for w in ("1", "4", "16"):
        path = tmp_path / f"r{w}.json"
        run(
            capsys, "compare", "--scenario", "weak", "--p", "1/5", "--n", "3000", "--trials", "3000", "--seed", "8",
            "--workers", w, "--format", "json", "-o", str(path),
        )
        texts.append(path.read_bytes())
    assert texts[0] == texts[1] == texts[2]
