import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from camg.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(main, list(args), catch_exceptions=False)


def test_exact_table_rows(runner):
    res = run(runner, "exact", "--n-max", "30")
    assert res.exit_code == 0
    data = json.loads(res.stdout)
    rows = {r["n"]: (r["numerator"], r["denominator"]) for r in data["table"]}
    assert rows[2] == (2, 1) and rows[3] == (10, 3) and rows[4] == (100, 21)
    assert data["fit"]["slope"] == pytest.approx(1.4449, abs=0.005)
    assert data["fit"]["intercept"] == pytest.approx(-1.0451, abs=0.02)


def test_exact_small_table_skips_fit(runner):
    res = run(runner, "exact", "--n-max", "1")
    assert res.exit_code == 0
    data = json.loads(res.stdout)
    assert [r["n"] for r in data["table"]] == [0, 1]
    assert data["fit"] is None
    assert "fit skipped" in res.stderr


def test_exact_tail_fit(runner):
    data = json.loads(run(runner, "exact", "--n-max", "200").stdout)
    assert abs(data["tail_fit"]["slope"] - 1 / math.log(2)) < 0.002


def test_exact_rejects_bad_ranges(runner):
    assert run(runner, "exact", "--n-max", "-1").exit_code == 2
    assert run(runner, "exact", "--n-max", "10", "--fit-min", "5", "--fit-max", "20").exit_code == 2


def test_exact_csv_matches_json(runner):
    text = run(runner, "exact", "--n-max", "12", "--format", "csv").stdout
    rows = list(csv.DictReader(io.StringIO(text)))
    data = json.loads(run(runner, "exact", "--n-max", "12").stdout)
    for row, entry in zip(rows, data["table"]):
        assert int(row["T_n_numerator"]) == entry["numerator"]
        assert int(row["T_n_denominator"]) == entry["denominator"]


def test_simulate_n1_matches_t2(runner):
    res = run(runner, "simulate", "--N", "1", "--trials", "100000", "--seed", "7")
    assert res.exit_code == 0
    data = json.loads(res.stdout)
    two = data["stage_two"]
    assert abs(two["mean"] - 2) < 3 * two["std_error"]
    assert two["exact_value"] == 2.0


def test_simulate_is_byte_identical(runner):
    a = run(runner, "simulate", "--N", "3", "--trials", "2000", "--seed", "4", "--format", "csv").stdout
    b = run(runner, "simulate", "--N", "3", "--trials", "2000", "--seed", "4", "--format", "csv").stdout
    assert a == b
    header = a.splitlines()[0]
    assert header == "quantity,n,trials,mean,std_error,exact_value"


def test_simulate_smoke_n5(runner, tmp_path):
    out = tmp_path / "sim.json"
    res = run(runner, "simulate", "--N", "5", "--trials", "1000", "--out", str(out))
    assert res.exit_code == 0
    data = json.loads(out.read_text())
    assert data["stage_one"]["mean"] >= 1
    assert data["stage_two"]["mean"] >= 1
    assert data["total_mean"] == pytest.approx(data["stage_one"]["mean"] + data["stage_two"]["mean"])


def test_simulate_subsets_uses_reference_engine(runner):
    data = json.loads(run(runner, "simulate", "--N", "3", "--trials", "50", "--subsets").stdout)
    assert data["set_splits"]["4"]["trials"] == 50


def test_simulate_rejects_zero_trials(runner):
    assert runner.invoke(main, ["simulate", "--N", "1", "--trials", "0"]).exit_code == 2


def test_oscillations_summary(runner):
    data = json.loads(run(runner, "oscillations", "--samples", "128").stdout)
    assert data["mean"] == pytest.approx(1.44269504089, abs=1e-9)
    assert data["alpha"] == pytest.approx(7.05e-11, rel=0.01)
    assert 0.95 <= data["amplitude_dft"] / data["alpha"] <= 1.05
    assert len(data["profile"]) == 128


def test_oscillations_csv_and_sample_floor(runner):
    text = run(runner, "oscillations", "--samples", "64", "--format", "csv").stdout
    assert text.splitlines()[0] == "log2_y,h_star,deviation"
    assert len(text.splitlines()) == 65
    assert runner.invoke(main, ["oscillations", "--samples", "10"]).exit_code == 2


def test_validate_cycle_n1_clean(runner):
    res = run(runner, "validate-cycle", "--N", "1")
    assert res.exit_code == 0
    assert json.loads(res.stdout)["ok"] is True


def test_validate_cycle_reports_window_violations(runner):
    res = run(runner, "validate-cycle", "--N", "5", "--horizon", "44")
    assert res.exit_code == 2
    data = json.loads(res.stdout)
    assert all(w == [5] * 4 for w in data["wins_per_period"].values())
    assert data["attendance_errors"] == []
    assert data["violations"]


def test_baseline_n1(runner):
    res = run(runner, "baseline", "--N", "1", "--trials", "1000", "--max-rounds", "200")
    assert res.exit_code == 0
    assert json.loads(res.stdout)["mean_periods"] >= 1


def test_baseline_slower_than_protocol(runner):
    base = json.loads(run(runner, "baseline", "--N", "10", "--trials", "50", "--max-rounds", "200").stdout)
    sim = json.loads(run(runner, "simulate", "--N", "10", "--trials", "1000").stdout)
    assert base["mean_days"] > sim["total_mean"]


def test_baseline_csv(runner):
    text = run(runner, "baseline", "--N", "2", "--trials", "20", "--max-rounds", "50", "--format", "csv").stdout
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["trigger"] == "start_day" and int(row["trials"]) == 20
