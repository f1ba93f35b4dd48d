import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from dissfermi import cli, closure
from dissfermi.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_OK, main


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "out"))
    return tmp_path / "out"


def write_config(tmp_path, name="cfg.ini", **overrides):
    base = {
        "dims": "4",
        "boundary": "periodic",
        "initial": "staggered",
        "channel_set": "nn_quadratic",
        "mu": "1.0",
        "tau_start": "0",
        "tau_stop": "1",
        "tau_count": "6",
        "observables": "staggered_susceptibility, fourier_mode(1), structure_factor(2)",
        "method": "both",
        "output": "small",
    }
    base.update(overrides)
    path = tmp_path / name
    path.write_text("[run]\n" + "".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def read_series(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_artifacts(tmp_path, output_root):
    assert main(["run", str(write_config(tmp_path))]) == EXIT_OK
    out = output_root / "small"
    rows = read_series(out / "series.csv")
    assert list(rows[0]) == ["tau", "observable", "value", "method"]
    by = defaultdict(dict)
    for r in rows:
        by[(r["observable"], r["tau"])][r["method"]] = float(r["value"])
    assert ("fourier_mode(1)#im", "0") in by
    for key, vals in by.items():
        assert abs(vals["oracle"] - vals["closure"]) <= 1e-8, key
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["normalization_deviation"] == 0.0
    assert manifest["closure_residuals"] == {"one-point": 0.0, "two-point": 0.0}
    assert manifest["config"]["dims"] == [4]
    spectrum = read_series(out / "spectrum.csv")
    assert list(spectrum[0]) == ["index", "lambda_paper", "rate", "staggered_overlap"]
    assert len(spectrum) == 16


def test_seventeen_digit_values(tmp_path, output_root):
    main(["run", str(write_config(tmp_path, method="closure", observables="staggered_magnetization"))])
    rows = read_series(output_root / "small" / "series.csv")
    v = rows[3]["value"]
    assert float(v) == pytest.approx(2 * np.exp(-4 * float(rows[3]["tau"])), abs=1e-12)
    assert len(v.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_fixed_step_runs_are_byte_identical(tmp_path, output_root):
    cfg = write_config(tmp_path, method="oracle", integrator="fixed", step="0.01")
    main(["run", str(cfg), "--output", str(tmp_path / "a")])
    main(["run", str(cfg), "--output", str(tmp_path / "b")])
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_thermal_log_grid(tmp_path, output_root):
    cfg = write_config(tmp_path, initial="thermal", beta="2.0", V="10", t="1", tau_start="0.01",
                       tau_spacing="log", observables="uniform_susceptibility")
    assert main(["run", str(cfg)]) == EXIT_OK
    rows = read_series(output_root / "small" / "series.csv")
    vals = {float(r["value"]) for r in rows}
    # conserved by the quadratic set
    assert max(vals) - min(vals) < 1e-8


@pytest.mark.parametrize(
    "overrides",
    [
        {"method": "oracle", "dims": "12"},
        {"channel_set": "nn_quartic"},
        {"observables": "structure_factor(9)"},
        {"dims": "5"},
        {"initial": "ground"},
        {"tau_spacing": "log"},
        {"mu": "-1"},
        {"colour": "blue"},
        {"tau_count": "many"},
    ],
)
def test_config_errors_exit_2(tmp_path, overrides):
    assert main(["run", str(write_config(tmp_path, **overrides))]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


def test_unclosed_set_is_numerical_failure(tmp_path, output_root):
    cfg = write_config(tmp_path, channel_set="nn_cubic_frozen", method="closure")
    assert main(["run", str(cfg)]) == EXIT_NUMERIC
    manifest = json.loads((output_root / "small" / "manifest.json").read_text())
    assert manifest["status"] == "numerical_failure"
    assert "residual" in manifest["diagnostics"]["message"]


def test_cubic_set_runs_with_oracle(tmp_path):
    cfg = write_config(tmp_path, channel_set="nn_cubic_frozen", method="oracle", observables="staggered_magnetization")
    assert main(["run", str(cfg)]) == EXIT_OK


def test_normcheck(capsys):
    assert main(["normcheck", "nn_linear", "2x4", "--boundary", "open"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["deviation"] <= 1e-12 and out["label_count"] == 10
    assert main(["normcheck", "nn_cubic_hopping", "4"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["normalized"] is False
    assert main(["normcheck", "nn_linear", "3"]) == EXIT_CONFIG


def test_figure_2_tables(output_root):
    assert main(["figure", "2a"]) == EXIT_OK
    assert main(["figure", "2b"]) == EXIT_OK
    rates = [float(r["rate"]) for r in read_series(output_root / "figure_2a" / "dominant_rate.csv")]
    frac = [float(r["chi0_over_N"]) for r in read_series(output_root / "figure_2b" / "chi0_over_N.csv")]
    assert len(rates) == 7 and all(b > a for a, b in zip(rates, rates[1:])) and rates[-1] <= 8
    assert all(b < a for a, b in zip(frac, frac[1:])) and frac[-1] > 0.25


def test_figure_3_rates_and_series(output_root):
    assert main(["figure", "3"]) == EXIT_OK
    rates = read_series(output_root / "figure_3" / "rates.csv")
    op = [float(r["operator_rate"]) for r in rates]
    assert [r["q"] for r in rates] == ["0", "1", "2", "3", "4"]
    assert all(b > a for a, b in zip(op, op[1:]))
    rows = read_series(output_root / "figure_3" / "structure" / "series.csv")
    assert {r["observable"] for r in rows} == {f"structure_factor({q})" for q in range(5)}


def test_validate_subset_and_report(tmp_path, capsys):
    report = tmp_path / "rep.json"
    assert main(["validate", "--only", "1", "5", "--report", str(report)]) == EXIT_OK
    data = json.loads(report.read_text())
    assert data["passed"] and [c["number"] for c in data["criteria"]] == [1, 5]
    assert {row["set"] for row in data["closure_residuals"]} == {
        "single_site_linear", "nn_linear", "nn_quadratic", "nn_cubic_frozen", "nn_cubic_hopping"}
    assert "[PASS]  1" in capsys.readouterr().out


def test_validate_detects_perturbed_rate(monkeypatch):
    original = closure.analytic_rate

    def perturbed(*args, **kw):
        law = original(*args, **kw)
        return closure.DecayLaw(law.rate * 1.001, law.constant, law.note)

    monkeypatch.setattr(closure, "analytic_rate", perturbed)
    assert main(["validate", "--only", "2", "--no-diagnostics"]) == EXIT_FAIL


def test_unknown_figure_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["figure", "7"])
    assert err.value.code == 2


def test_split_observables():
    assert cli._split_observables("a, fourier_mode(1,1), b") == ["a", "fourier_mode(1,1)", "b"]


def test_figure_1_parallel_panels(output_root):
    assert main(["figure", "1", "--jobs", "2"]) == EXIT_OK
    series = {}
    for beta in ("0.1", "1", "10"):
        rows = read_series(output_root / "figure_1" / f"beta_{beta}" / "series.csv")
        oracle = np.array([float(r["value"]) for r in rows if r["method"] == "oracle"])
        clos = np.array([float(r["value"]) for r in rows if r["method"] == "closure"])
        assert np.max(np.abs(oracle - clos)) <= 1e-8
        series[beta] = oracle
    assert np.max(np.abs(series["10"] - series["1"]) / series["1"]) <= 0.02
    assert series["0.1"][0] < series["1"][0]
    manifest = json.loads((output_root / "figure_1" / "manifest.json").read_text())
    assert set(manifest["panels"].values()) == {"ok"}


def test_full_validation_passes(capsys):
    assert main(["validate"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 16 and "16/16 criteria passed" in out


def test_figure_beta_override(output_root):
    assert main(["figure", "1", "--beta", "2"]) == EXIT_OK
    assert sorted(p.name for p in (output_root / "figure_1").iterdir() if p.is_dir()) == ["beta_2"]
    assert main(["figure", "3", "--beta", "1", "2"]) == EXIT_CONFIG


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_run(path, output_root):
    assert main(["run", str(path)]) == EXIT_OK
    assert (output_root / path.stem / "series.csv").exists()
