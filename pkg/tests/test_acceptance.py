"""Acceptance gate: one test per shipped guarantee.

Each test states its claim, asserts it with pinned tolerances, and
enforces the stated wall-clock budget.  Run with ``pytest -v
tests/test_acceptance.py`` for one pass/fail line per criterion.
"""
import math
import pathlib
import tempfile
import time

import numpy as np
import pytest
from scipy import stats

import steingauge as sg
from steingauge import bounds as bnd
from steingauge import difference as diff
from steingauge import distances, harness

GRID = (16, 64, 256, 1024)


def _run(statistic, bound, *, n_grid=GRID, samples=100_000, seed=7,
         component=None, delta=1.0, **extra):
    cfg = harness.ExperimentConfig(
        statistic=statistic, bound=bound, delta=delta, n_grid=n_grid,
        samples_per_n=samples, seed=seed,
        output_dir=tempfile.mkdtemp(prefix="steingauge-accept-"),
        component=component if component is not None else sg.rademacher(),
        **extra,
    )
    return cfg, harness.run_experiment(cfg)


def test_criterion_1_exact_product_values():
    start = time.perf_counter()
    for n in (5, 17, 65, 257):
        model = sg.product_example(n)
        d1 = bnd.d1_bound(
            diff.profile(model, 1.0, diff.AlphaParams(0.0, 0.5, 0.5), "d1"),
            form="termwise")
        assert d1.total == pytest.approx(8.0 / math.sqrt(n - 1), rel=1e-12)
        d2 = bnd.d2_bound(
            diff.profile(model, 1.0, diff.AlphaParams(0.0, 0.5, 0.0), "d2"),
            form="termwise")
        assert d2.total == pytest.approx(24.0 / (n - 1), rel=1e-12)
    assert time.perf_counter() - start < 1.0


def test_criterion_2_lyapunov_reproduction():
    start = time.perf_counter()
    cfg, res = _run("partial_sum", "d1_aggregate")
    for n, rep, w1 in zip(GRID, res.reports, res.w1):
        space = sg.ProductSpace.iid(sg.rademacher(), n)
        closed = bnd.partial_sum_d1_bound(space, 1.0).total
        assert closed == pytest.approx(16.0 / math.sqrt(n), rel=1e-12)
        assert rep.total == pytest.approx(8.0 / math.sqrt(n), rel=1e-12)
        assert w1.value <= rep.total <= closed
    slope = harness.fit_rate([(n, e.value) for n, e in zip(GRID, res.w1)]).slope
    assert -0.65 <= slope <= -0.35
    assert time.perf_counter() - start < 180.0


def test_criterion_3_relaxed_moments_pareto():
    start = time.perf_counter()
    cfg, res = _run("partial_sum", "partial_sum_d1",
                    component=sg.symmetric_pareto(3.2), seed=5)
    fit = harness.fit_rate([(n, r.total) for n, r in zip(GRID, res.reports)])
    assert abs(fit.slope - (-0.5)) <= 0.15
    for rep, w1 in zip(res.reports, res.w1):
        assert w1.value <= rep.total
    assert time.perf_counter() - start < 300.0


def test_criterion_4_vanishing_third_moment():
    start = time.perf_counter()
    c1 = 40.0 + 8.0 * (3.0 ** (1.0 / 3.0) * (2.0 + 3.0 ** (4.0 / 3.0))) ** 0.75
    assert abs(c1 - 82.0) <= 0.1
    assert bnd.partial_sum_d2_constant(1.0) == c1
    m = 1_000_000
    u = (np.arange(1, m + 1) - 0.5) / m
    points = []
    for n in GRID:
        rep = bnd.partial_sum_d2_bound(sg.ProductSpace.iid(sg.rademacher(), n),
                                       1.0)
        assert rep.total == pytest.approx(c1 / n, rel=1e-12)
        # the scaled sign sum is (2B - n)/sqrt(n), B ~ Binomial(n, 1/2);
        # the quantile sweep removes sampling noise from the panel
        samples = (2.0 * stats.binom.ppf(u, n, 0.5) - n) / math.sqrt(n)
        lower = distances.d2_lower(samples, bootstrap=16, seed=0).value
        assert lower <= rep.total
        points.append((n, lower))
    slope = harness.fit_rate(points).slope
    assert -1.25 <= slope <= -0.75
    assert time.perf_counter() - start < 600.0


def test_criterion_5_m_runs():
    start = time.perf_counter()
    cfg1, res1 = _run("m_runs", "m_dependent_d1", seed=11, params={"m": 2})
    cfg2, res2 = _run("m_runs", "m_dependent_d2", seed=11, params={"m": 2})
    for n, r1, r2 in zip(GRID, res1.reports, res2.reports):
        assert r1.total == pytest.approx(2048.0 / math.sqrt(n), rel=1e-12)
        assert r2.total == pytest.approx(176128.0 / n, rel=1e-12)
    for res in (res1, res2):
        for rep, w1, d2 in zip(res.reports, res.w1, res.d2):
            assert w1.value <= rep.total
            assert d2.value <= rep.total
    slope = harness.fit_rate([(n, e.value) for n, e in zip(GRID, res1.w1)]).slope
    assert -0.65 <= slope <= -0.35
    assert time.perf_counter() - start < 300.0


def test_criterion_6_oracle_equivalence():
    start = time.perf_counter()
    identities = harness.identity_battery(seed=0)
    assert identities.cases >= 200
    assert identities.max_violation <= 1e-9
    assert identities.notes == ()
    inequalities = harness.inequality_battery(seed=0)
    assert inequalities.cases >= 200
    assert inequalities.max_violation <= inequalities.threshold
    assert inequalities.notes == ()
    assert time.perf_counter() - start < 120.0


def test_criterion_7_stein_smoothness():
    start = time.perf_counter()
    rep = harness.stein_battery(deltas=(0.25, 0.5, 1.0))
    assert rep.max_violation <= 0.0
    assert rep.notes == ()
    assert time.perf_counter() - start < 30.0


def test_criterion_8_quadratic_form_circulant():
    start = time.perf_counter()
    ns = (16, 64, 256)
    rng = np.random.default_rng(2718)
    brackets, ltildes, w1s = [], [], []
    for n in ns:
        A = np.zeros((n, n))
        for u in range(n):
            A[u, (u + 1) % n] = 1.0
            A[u, (u - 1) % n] = 1.0
        model = sg.quadratic_form(sg.ProductSpace.iid(sg.rademacher(), n), A)
        rep = bnd.quadratic_form_d1_bound(model, 1.0)
        brackets.append(rep.total)
        ltildes.append(dict(rep.constants)["row_energy_ratio"])
        X = rng.choice([-1.0, 1.0], size=(100_000, n))
        F = (X * np.roll(X, -1, axis=1)).sum(axis=1) / math.sqrt(model.variance)
        w1s.append(distances.w1_to_normal(F, bootstrap=16, seed=4).value)
    assert brackets[0] > brackets[1] > brackets[2]
    slope = float(np.polyfit(np.log10(ns), np.log10(ltildes), 1)[0])
    assert -1.2 <= slope <= -0.8
    # constant calibrated at the smallest n, with margin, must cover the rest
    c_star = 1.25 * w1s[0] / brackets[0]
    for i in (1, 2):
        assert w1s[i] <= c_star * brackets[i]
    assert time.perf_counter() - start < 300.0


def test_criterion_9_determinism_across_threads():
    outputs = {}
    for threads in (1, 8):
        cfg, res = _run("partial_sum", "d1_aggregate",
                        n_grid=(4, 8, 16, 32), samples=20_000,
                        threads=threads)
        outputs[threads] = (
            pathlib.Path(res.output_dir) / "results.csv").read_bytes()
    assert outputs[1] == outputs[8]
