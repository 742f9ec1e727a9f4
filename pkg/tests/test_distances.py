"""Empirical W1 against the normal and the smooth-panel d2 lower bound."""
import math

import numpy as np
import pytest
from scipy import stats

from steingauge import distances, stein
from steingauge.errors import EmptySample, PanelViolatesNorms

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def test_w1_degenerate_zero_sample():
    est = distances.w1_to_normal(np.zeros(50))
    assert est.kind == "w1_empirical"
    assert est.value == 0.7978845608028654  # integral of |1_{t>=0} - Phi|
    assert est.value == pytest.approx(SQRT_2_OVER_PI, rel=1e-15)
    assert est.sample_size == 50
    assert est.resample_std_error <= 1e-12  # resamples of a constant


def test_w1_quantile_grid():
    m = 10_000
    q = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    est = distances.w1_to_normal(q)
    # segmentwise-exact oracle for the discretized CDF
    assert est.value == pytest.approx(0.00021831624176388094, abs=1e-9)
    assert est.value <= 2.5e-4


def test_w1_large_normal_sample():
    rng = np.random.default_rng(42)
    est = distances.w1_to_normal(rng.standard_normal(1_000_000), bootstrap=24)
    assert est.value <= 5e-3
    assert est.resample_std_error > 0.0


def test_w1_translation_lipschitz():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(500)
    base = distances.w1_to_normal(x).value
    shifted = distances.w1_to_normal(x + 0.1).value
    assert abs(shifted - base) <= 0.1 + 1e-12


def test_permutation_bit_identity():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(400)
    perm = rng.permutation(x)
    assert (distances.w1_to_normal(perm, seed=3).value
            == distances.w1_to_normal(x, seed=3).value)
    assert (distances.d2_lower(perm, seed=3).value
            == distances.d2_lower(x, seed=3).value)


def test_d2_lower_degenerate_zero_sample():
    est = distances.d2_lower(np.zeros(50))
    assert est.kind == "d2_lower"
    # cos member at frequency 1: |e^{-1/2} - 1|
    assert est.value == pytest.approx(1.0 - math.exp(-0.5), rel=1e-15)
    assert est.value >= 0.5 * (1.0 - math.exp(-0.5))


def test_d2_lower_large_normal_sample():
    rng = np.random.default_rng(42)
    x = rng.standard_normal(1_000_000)
    d2 = distances.d2_lower(x, bootstrap=24)
    assert d2.value <= 4e-3
    w1 = distances.w1_to_normal(x, bootstrap=24)
    combined = d2.resample_std_error + w1.resample_std_error
    assert d2.value <= w1.value + 3.0 * combined  # class containment


def test_containment_various_laws():
    rng = np.random.default_rng(99)
    for draw in (rng.standard_normal(4000),
                 rng.uniform(-2.0, 2.0, size=4000),
                 rng.standard_normal(4000) ** 3 / 4.0):
        w1 = distances.w1_to_normal(draw, seed=5)
        d2 = distances.d2_lower(draw, seed=5)
        slack = 3.0 * (w1.resample_std_error + d2.resample_std_error)
        assert d2.value <= w1.value + slack


def test_panel_norms_and_means():
    panel = distances.standard_panel()
    distances.validate_panel(panel)
    for tf in panel:
        assert tf.sup_h1 <= 1.0 + 1e-12
        assert tf.sup_h2 <= 1.0 + 1e-12
    means = {tf.label: tf.normal_mean() for tf in panel}
    # odd members vanish; cosines follow e^{-w^2/2} scaled by max(w, w^2)
    assert means["sin_1"] == pytest.approx(0.0, abs=1e-12)
    assert means["damped_ramp"] == pytest.approx(0.0, abs=1e-12)
    assert means["cos_0.5"] == pytest.approx(2.0 * math.exp(-0.125), abs=1e-12)
    assert means["cos_1"] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert means["cos_2"] == pytest.approx(math.exp(-2.0) / 4.0, abs=1e-12)


def test_empty_and_short_samples():
    with pytest.raises(EmptySample):
        distances.w1_to_normal([])
    with pytest.raises(EmptySample):
        distances.w1_to_normal([1.0])
    with pytest.raises(EmptySample):
        distances.d2_lower([])


def test_panel_violations():
    with pytest.raises(PanelViolatesNorms):
        distances.d2_lower([0.0, 1.0], panel=[])
    loud = stein.TestFunction(
        h=lambda x: 2.0 * np.sin(np.asarray(x, dtype=float)),
        h_prime=lambda x: 2.0 * np.cos(np.asarray(x, dtype=float)),
        sup_h1=2.0, sup_h2=2.0,
        h_second=lambda x: -2.0 * np.sin(np.asarray(x, dtype=float)),
        label="loud",
    )
    with pytest.raises(PanelViolatesNorms):
        distances.d2_lower([0.0, 1.0], panel=[loud])


def test_bootstrap_seed_determinism():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(300)
    a = distances.w1_to_normal(x, seed=4)
    b = distances.w1_to_normal(x, seed=4)
    assert a.resample_std_error == b.resample_std_error
    c = distances.w1_to_normal(x, seed=5)
    assert a.resample_std_error != c.resample_std_error
