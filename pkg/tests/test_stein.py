"""Stein equation solver and the smoothness gates it certifies."""
import math

import numpy as np
import pytest

from steingauge import stein
from steingauge.errors import InvalidOrder

BATTERY = {tf.label: tf for tf in stein.battery()}


def _cosine(omega: float) -> stein.TestFunction:
    return stein.TestFunction(
        h=lambda x, w=omega: np.cos(w * np.asarray(x, dtype=float)),
        h_prime=lambda x, w=omega: -w * np.sin(w * np.asarray(x, dtype=float)),
        sup_h1=omega, sup_h2=omega * omega,
        h_second=lambda x, w=omega: -w * w * np.cos(w * np.asarray(x, dtype=float)),
        label=f"cos{omega:g}",
    )


def test_constant_h_gives_zero_solution():
    const = stein.TestFunction(
        h=lambda x: np.full_like(np.asarray(x, dtype=float), 3.0),
        h_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        sup_h1=0.0, sup_h2=0.0,
        h_second=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label="const",
    )
    sol = stein.solve(const)
    assert sol.eh_normal == pytest.approx(3.0, abs=1e-12)
    assert np.abs(sol.f).max() <= 1e-12
    assert stein.holder_check_second(sol, 1.0) == 0.0


def test_identity_h_gives_minus_one():
    sol = stein.solve(BATTERY["identity"])
    assert sol.eh_normal == pytest.approx(0.0, abs=1e-13)
    assert np.abs(sol.f + 1.0).max() <= 1e-12
    assert np.abs(sol.f_prime).max() <= 1e-12
    assert np.abs(sol.f_second).max() <= 1e-12
    assert stein.holder_check_first(sol, 1.0) <= 1e-10
    assert stein.holder_check_second(sol, 1.0) <= 1e-10


def test_grid_contract():
    sol = stein.solve(BATTERY["sine"], half_width=6.0, grid_size=1501)
    assert sol.grid[0] == -6.0
    assert sol.grid[-1] == 6.0
    assert len(sol.grid) == 1501
    assert np.all(np.diff(sol.grid) > 0)


def test_battery_residuals_and_normal_means():
    for tf in stein.battery():
        sol = stein.solve(tf)
        assert sol.residual <= 1e-7, tf.label
        assert sol.tolerance == 1e-7
    assert stein.solve(BATTERY["cosine"]).eh_normal == pytest.approx(
        math.exp(-0.5), abs=1e-12)
    # odd test functions integrate to zero against the normal
    for label in ("identity", "sine", "fast_sine", "tanh"):
        assert stein.solve(BATTERY[label]).eh_normal == pytest.approx(
            0.0, abs=1e-12)
    assert stein.solve(_cosine(2.0)).eh_normal == pytest.approx(
        0.1353352832366127, abs=1e-12)


def test_holder_ratios_within_contract():
    for tf in stein.battery():
        sol = stein.solve(tf)
        for delta in (0.25, 0.5, 1.0):
            assert stein.holder_check_first(sol, delta) <= 1.0 + 1e-3, (
                tf.label, delta)
            assert stein.holder_check_second(sol, delta) <= 1.0 + 1e-3, (
                tf.label, delta)


def test_sup_norm_caps_on_grid():
    for tf in stein.battery():
        report = stein.sup_norm_report(stein.solve(tf))
        for name, (observed, cap) in report.items():
            assert observed <= cap + 1e-9, (tf.label, name)
    sine = stein.sup_norm_report(stein.solve(BATTERY["sine"]))
    assert sine["f_prime"][1] == pytest.approx(math.sqrt(2.0 / math.pi),
                                               rel=1e-15)
    assert sine["f_second"][1] == 2.0
    assert sine["f_third"][1] == 2.0


def test_holder_smoothness_factor():
    assert stein.holder_smoothness_factor(1.0, 3.0) == 6.0
    assert stein.holder_smoothness_factor(2.0, 1.0) == 8.0


def test_domain_validation():
    tf = BATTERY["sine"]
    with pytest.raises(InvalidOrder):
        stein.solve(tf, half_width=3.0)
    with pytest.raises(InvalidOrder):
        stein.solve(tf, half_width=12.5)
    with pytest.raises(InvalidOrder):
        stein.solve(tf, grid_size=999)
    with pytest.raises(InvalidOrder):
        stein.solve(tf, grid_size=2000)
    with pytest.raises(InvalidOrder):
        stein.holder_check_first(stein.solve(tf), 0.0)


def test_lying_sup_norm_declaration_rejected():
    bad = stein.TestFunction(
        h=lambda x: np.sin(4.0 * np.asarray(x, dtype=float)),
        h_prime=lambda x: 4.0 * np.cos(4.0 * np.asarray(x, dtype=float)),
        sup_h1=1.0, label="lying",
    )
    with pytest.raises(ValueError):
        stein.solve(bad)


def test_stronger_oscillation_still_within_gates():
    # the propositions are uniform in h; omega = 2 doubles the norms
    sol = stein.solve(_cosine(2.0))
    assert sol.residual <= 1e-7
    for delta in (0.5, 1.0):
        assert stein.holder_check_first(sol, delta) <= 1.0 + 1e-3
        assert stein.holder_check_second(sol, delta) <= 1.0 + 1e-3
