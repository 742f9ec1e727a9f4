"""Empirical distances between a sample and the standard normal.

Two estimators feed the harness sandwiches: the exact L1 distance
between the empirical CDF and Phi (equivalently the 1-Wasserstein
distance to the normal), and a lower bound on the smooth-test-function
distance obtained by scanning a fixed panel of functions with first and
second derivative sup-norms at most 1.

Both estimators carry bootstrap standard errors (multinomial resampling
of the empirical measure) and are bit-identical under permutation of
the input sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import EmptySample, PanelViolatesNorms
from .stein import TestFunction

W1_EMPIRICAL = "w1_empirical"
D2_LOWER = "d2_lower"

_NORM_GRID = np.linspace(-24.0, 24.0, 9601)
_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class DistanceEstimate:
    kind: str
    value: float
    sample_size: int
    resample_std_error: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "sample_size": self.sample_size,
            "resample_std_error": self.resample_std_error,
        }


# ----------------------------------------------------------------------
# W1 distance to the normal
# ----------------------------------------------------------------------

def _phi_antiderivative(t: np.ndarray) -> np.ndarray:
    """W(t) = t Phi(t) + phi(t), with W' = Phi, W(-inf) = 0."""
    t = np.asarray(t, dtype=float)
    return t * ndtr(t) + np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def _w1_of_weighted_sorted(x: np.ndarray, cum: np.ndarray) -> float:
    """int |F - Phi| for the measure with CDF value cum[i] on (x[i], x[i+1]).

    On each gap the integrand is |c - Phi(t)|; with H_c(t) = c t - W(t)
    the segment integral is 2 H_c(q) - H_c(a) - H_c(b) where q is
    Phi^{-1}(c) clamped to the segment.  Tails contribute W(x_min) and
    W(x_max) - x_max.
    """
    a, b = x[:-1], x[1:]
    with np.errstate(divide="ignore"):
        q = ndtri(cum)
    qa = np.clip(q, a, b)
    wa, wb, wq = _phi_antiderivative(a), _phi_antiderivative(b), _phi_antiderivative(qa)
    seg = 2.0 * (cum * qa - wq) - (cum * a - wa) - (cum * b - wb)
    total = _phi_antiderivative(x[0]) + float(np.sum(seg))
    total += _phi_antiderivative(x[-1]) - x[-1]
    return float(total)


def w1_to_normal(samples, bootstrap: int = 200, seed: int = 0) -> DistanceEstimate:
    """Exact int |F_emp(t) - Phi(t)| dt for the empirical CDF.

    Deterministic given the sample multiset; the bootstrap standard
    error resamples weights multinomially on the sorted support.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m < 2:
        raise EmptySample(f"need at least 2 samples, got {m}")
    cum = np.arange(1, m, dtype=float) / m
    value = _w1_of_weighted_sorted(x, cum)
    se = 0.0
    if bootstrap > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, m, 0x57A7]))
        reps = np.empty(bootstrap)
        for bidx in range(bootstrap):
            counts = np.bincount(rng.integers(0, m, size=m), minlength=m)
            reps[bidx] = _w1_of_weighted_sorted(x, np.cumsum(counts)[:-1] / m)
        se = float(np.std(reps, ddof=1))
    return DistanceEstimate(W1_EMPIRICAL, value, m, se)


# ----------------------------------------------------------------------
# panel lower bound for the second-order smooth distance
# ----------------------------------------------------------------------

def validate_panel(panel: list[TestFunction]) -> None:
    """Check the class norms sup|h'| <= 1, sup|h''| <= 1 on a grid."""
    if not panel:
        raise PanelViolatesNorms("empty panel")
    for tf in panel:
        if tf.sup_h1 > 1.0 + 1e-12 or not tf.sup_h2 <= 1.0 + 1e-12:
            raise PanelViolatesNorms(
                f"{tf.label or 'panel member'}: declared norms"
                f" ({tf.sup_h1}, {tf.sup_h2}) exceed the class limit 1"
            )
        if tf.h_second is None:
            raise PanelViolatesNorms(
                f"{tf.label or 'panel member'}: missing second derivative"
            )
        g1 = float(np.max(np.abs(tf.h_prime(_NORM_GRID))))
        g2 = float(np.max(np.abs(tf.h_second(_NORM_GRID))))
        if g1 > tf.sup_h1 + _NORM_SLACK or g2 > tf.sup_h2 + _NORM_SLACK:
            raise PanelViolatesNorms(
                f"{tf.label or 'panel member'}: grid norms ({g1:.6g}, {g2:.6g})"
                f" exceed declared ({tf.sup_h1}, {tf.sup_h2})"
            )


def standard_panel() -> list[TestFunction]:
    """Normalized trigonometric panel plus one odd damped ramp.

    sin(wx)/max(w, w^2) and cos(wx)/max(w, w^2) satisfy both class norms
    with equality in one of them at each w; x exp(-x^2/4) has
    sup|h'| = 1 (at 0) and sup|h''| ~ 0.9755 < 1, so no rescale is
    needed.
    """
    panel = []
    for omega in (0.5, 1.0, 2.0):
        scale = max(omega, omega * omega)
        panel.append(TestFunction(
            h=_scaled_trig(np.sin, omega, 1.0 / scale),
            h_prime=_scaled_trig(np.cos, omega, omega / scale),
            h_second=_scaled_trig(np.sin, omega, -omega * omega / scale),
            sup_h1=omega / scale, sup_h2=omega * omega / scale,
            label=f"sin_{omega:g}",
        ))
        panel.append(TestFunction(
            h=_scaled_trig(np.cos, omega, 1.0 / scale),
            h_prime=_scaled_trig(np.sin, omega, -omega / scale),
            h_second=_scaled_trig(np.cos, omega, -omega * omega / scale),
            sup_h1=omega / scale, sup_h2=omega * omega / scale,
            label=f"cos_{omega:g}",
        ))

    def damped(x):
        x = np.asarray(x, dtype=float)
        return x * np.exp(-0.25 * x * x)

    def damped_prime(x):
        x = np.asarray(x, dtype=float)
        return (1.0 - 0.5 * x * x) * np.exp(-0.25 * x * x)

    def damped_second(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * x * (x * x - 6.0) * np.exp(-0.25 * x * x)

    panel.append(TestFunction(
        h=damped, h_prime=damped_prime, h_second=damped_second,
        sup_h1=1.0, sup_h2=1.0, label="damped_ramp",
    ))
    validate_panel(panel)
    return panel


def _scaled_trig(fn, omega: float, coef: float):
    return lambda x: coef * fn(omega * np.asarray(x, dtype=float))


_PANEL_CACHE: list[TestFunction] | None = None


def _default_panel() -> list[TestFunction]:
    # cached so E[h(N)] quadratures run once per process
    global _PANEL_CACHE
    if _PANEL_CACHE is None:
        _PANEL_CACHE = standard_panel()
    return _PANEL_CACHE


def d2_lower(samples, panel: list[TestFunction] | None = None,
             bootstrap: int = 200, seed: int = 0) -> DistanceEstimate:
    """max over the panel of |mean h(samples) - E h(N)|.

    A certified lower bound (up to sampling error) on the distance over
    the class with first and second derivative sup-norms at most 1.
    """
    if panel is None:
        panel = _default_panel()
    else:
        validate_panel(panel)
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise EmptySample("need at least 1 sample")
    hvals = np.stack([np.asarray(tf.h(x), dtype=float) for tf in panel])
    eh = np.array([tf.normal_mean() for tf in panel])
    value = float(np.max(np.abs(hvals.mean(axis=1) - eh)))
    se = 0.0
    if bootstrap > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, m, 0xD2]))
        reps = np.empty(bootstrap)
        for bidx in range(bootstrap):
            counts = np.bincount(rng.integers(0, m, size=m), minlength=m)
            reps[bidx] = np.max(np.abs(hvals @ (counts / m) - eh))
        se = float(np.std(reps, ddof=1))
    return DistanceEstimate(D2_LOWER, value, m, se)
