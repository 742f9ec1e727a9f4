"""Experiment runner: configs, rate fits, artifacts, batteries, CLI."""
import copy
import json
import math
import pathlib
import subprocess
import sys

import numpy as np
import pytest

import steingauge as sg
from steingauge import harness
from steingauge.errors import ConfigError, DegenerateFit

BASE = dict(
    statistic="partial_sum", bound="partial_sum_d1", delta=1.0,
    n_grid=[4, 8], samples_per_n=2000, seed=1, output_dir="unused",
    component={"family": "rademacher"},
)


def _config(tmp_path, **overrides):
    raw = copy.deepcopy(BASE)
    raw["output_dir"] = str(tmp_path / "out")
    raw.update(overrides)
    return harness.config_from_dict(raw)


# ------------------------------------------------------------- configuration

def test_config_validation():
    for key, value in (("delta", 1.5), ("delta", 0.0),
                       ("samples_per_n", 500),
                       ("n_grid", [8, 4]), ("n_grid", [4, 4]),
                       ("bogus_key", 1)):
        raw = copy.deepcopy(BASE)
        raw[key] = value
        with pytest.raises(ConfigError):
            harness.config_from_dict(raw)


def test_config_toml_round_trip(tmp_path):
    path = tmp_path / "cfg.toml"
    out = tmp_path / "out"
    path.write_text(
        "statistic = \"partial_sum\"\n"
        "bound = \"partial_sum_d1\"\n"
        "delta = 1.0\n"
        "n_grid = [4, 8]\n"
        "samples_per_n = 2000\n"
        "seed = 1\n"
        f"output_dir = \"{out}\"\n"
        "[component]\n"
        "family = \"rademacher\"\n"
    )
    cfg = harness.load_config(path)
    assert cfg.n_grid == (4, 8)
    assert cfg.component.to_json()["family"] == "rademacher"
    assert cfg.delta == 1.0


# ----------------------------------------------------------------- rate fits

def test_fit_rate_exact_slopes():
    ns = np.array([16.0, 64.0, 256.0, 1024.0])
    fit = harness.fit_rate(list(zip(ns, 3.0 * ns ** -0.5)))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.max_abs_residual <= 1e-12
    assert 10.0 ** fit.intercept == pytest.approx(3.0, rel=1e-12)
    assert harness.fit_rate(list(zip(ns, 2.0 / ns))).slope == pytest.approx(
        -1.0, abs=1e-12)


def test_fit_rate_noisy_slope():
    ns = np.array([16.0, 64.0, 256.0, 1024.0])
    rng = np.random.default_rng(2024)
    vals = 3.0 * ns ** -0.75 * (1.0 + 0.01 * rng.standard_normal(4))
    fit = harness.fit_rate(list(zip(ns, vals)))
    assert fit.slope == pytest.approx(-0.7546837309614396, abs=1e-12)
    assert -0.80 <= fit.slope <= -0.70


def test_fit_rate_degenerate_inputs():
    with pytest.raises(DegenerateFit):
        harness.fit_rate([(4.0, 1.0), (8.0, 0.5), (16.0, 0.25)])
    with pytest.raises(DegenerateFit):
        harness.fit_rate([(4.0, 1.0), (8.0, 0.5), (16.0, 0.25), (32.0, 0.0)])
    with pytest.raises(DegenerateFit):
        harness.fit_rate([(4.0, 1.0), (8.0, 0.5), (16.0, -0.2), (32.0, 0.1)])


# ------------------------------------------------------------ run_experiment

def test_run_partial_sum_closed_bound(tmp_path):
    cfg = _config(tmp_path, n_grid=[4, 8, 16, 32])
    res = harness.run_experiment(cfg)
    assert res.violations == ()
    for n, rep, w1 in zip(cfg.n_grid, res.reports, res.w1):
        assert rep.total == pytest.approx(16.0 / math.sqrt(n), rel=1e-12)
        assert w1.value <= rep.total  # empirical side of the sandwich
    assert res.rate_fits["bound_total"].slope == pytest.approx(-0.5, abs=1e-12)
    assert res.lemma_check == ()  # first-order route carries no cubic claim


def test_run_product_termwise_bound(tmp_path):
    cfg = _config(tmp_path, statistic="product_example", bound="d1_termwise",
                  n_grid=[5, 17, 65], alpha=0.0)
    res = harness.run_experiment(cfg)
    for n, rep in zip(cfg.n_grid, res.reports):
        assert rep.total == pytest.approx(8.0 / math.sqrt(n - 1), rel=1e-12)


def test_run_writes_artifacts(tmp_path):
    cfg = _config(tmp_path)
    res = harness.run_experiment(cfg)
    out = pathlib.Path(res.output_dir)
    csv = (out / "results.csv").read_text().splitlines()
    assert csv[0].startswith("n,bound_total")
    assert len(csv) == 1 + len(cfg.n_grid)
    for name in ("w1", "w1_se", "d2_lower", "d2_se"):
        assert name in csv[0].split(",")
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"columns", "config", "git_hash", "lemma_check",
                             "package_version", "violations"}
    assert manifest["config"]["seed"] == cfg.seed
    rates = json.loads((out / "rates.json").read_text())
    assert set(rates) == {"bound_total", "w1", "d2_lower"}


def test_lemma_check_routes(tmp_path):
    cfg = _config(tmp_path, bound="partial_sum_d2", n_grid=[16, 64])
    res = harness.run_experiment(cfg)
    modes = [row["mode"] for row in res.lemma_check]
    assert modes == ["exact", "hook"]  # enumerable first, family hook beyond
    for row in res.lemma_check:
        assert row["ef3"] == 0.0
        assert row["twice_ez3"] == 0.0
        assert row["residual"] == 0.0
    assert res.violations == ()


def test_lemma_check_window_identity(tmp_path):
    cfg = _config(tmp_path, statistic="m_runs", bound="m_dependent_d2",
                  n_grid=[16, 64], samples_per_n=1000, params={"m": 2})
    res = harness.run_experiment(cfg)
    assert [row["mode"] for row in res.lemma_check] == [
        "exact", "window_identity"]
    assert [r.total for r in res.reports] == [
        pytest.approx(176128.0 / 16.0, rel=1e-12),
        pytest.approx(176128.0 / 64.0, rel=1e-12),
    ]


def test_results_identical_across_thread_counts(tmp_path):
    runs = {}
    for threads in (1, 4):
        cfg = _config(tmp_path / f"t{threads}", threads=threads,
                      n_grid=[4, 8, 16, 32])
        res = harness.run_experiment(cfg)
        runs[threads] = (pathlib.Path(res.output_dir) / "results.csv").read_bytes()
    assert runs[1] == runs[4]


def test_standardized_samples_deterministic(tmp_path):
    cfg = _config(tmp_path)
    model = sg.partial_sum(sg.ProductSpace.iid(sg.rademacher(), 8))
    a = harness.standardized_samples(cfg, model, n_index=1)
    b = harness.standardized_samples(cfg, model, n_index=1)
    c = harness.standardized_samples(cfg, model, n_index=0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (cfg.samples_per_n,)
    assert abs(a.mean()) <= 5.0 / math.sqrt(cfg.samples_per_n)


# ------------------------------------------------------------------ batteries

def test_identity_battery():
    rep = harness.identity_battery(seed=1)
    assert rep.cases >= 200
    assert rep.max_violation <= rep.threshold == 1e-9


def test_inequality_battery():
    rep = harness.inequality_battery(seed=1)
    assert rep.cases >= 200
    assert rep.max_violation <= rep.threshold == 1e-10
    assert len(rep.histogram) == 10
    assert sum(rep.histogram) >= rep.cases


def test_stein_battery():
    rep = harness.stein_battery()
    assert rep.max_violation <= rep.threshold == 0.0
    assert rep.notes == ()


# ------------------------------------------------------------------------ CLI

def _cli(*args):
    return subprocess.run([sys.executable, "-m", "steingauge.cli", *args],
                          capture_output=True, text=True)


def test_cli_bounds_and_rates(tmp_path):
    cfg = tmp_path / "cfg.toml"
    out = tmp_path / "out"
    cfg.write_text(
        "statistic = \"partial_sum\"\nbound = \"partial_sum_d1\"\n"
        "delta = 1.0\nn_grid = [4, 8, 16, 32]\nsamples_per_n = 1500\n"
        f"seed = 9\noutput_dir = \"{out}\"\n"
        "[component]\nfamily = \"rademacher\"\n"
    )
    run = _cli("bounds", "--config", str(cfg))
    assert run.returncode == 0, run.stderr
    assert "partial_sum_d1=8" in run.stdout
    assert (out / "results.csv").exists()
    rates = _cli("rates", "--config", str(cfg))
    assert rates.returncode == 0, rates.stderr
    assert "bound_total: slope -0.5000" in rates.stdout


def test_cli_verify_and_stein(tmp_path):
    verify = _cli("verify", "--battery", "inequalities", "--seed", "2")
    assert verify.returncode == 0, verify.stderr
    assert "PASS" in verify.stdout
    csv = tmp_path / "stein.csv"
    stein_run = _cli("stein", "--h", "sin", "--delta", "0.5",
                     "--out", str(csv))
    assert stein_run.returncode == 0, stein_run.stderr
    header = csv.read_text().splitlines()
    assert header[0].startswith("# h=sine")
    assert any(line.startswith("grid,") or line.startswith("x,")
               for line in header[:6])
