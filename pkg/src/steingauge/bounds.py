"""Normal-approximation error bounds driven by difference profiles.

Two smoothness classes are covered.  The first-order class (test
functions with a bounded, Holder-delta first derivative) yields bounds of
order sigma^-(2+delta); the second-order class (bounded Holder second
derivative, requiring a vanishing third moment) yields sigma^-(3+delta).
Each class has a termwise form, sharper when projected differences are
cheap, and an aggregate form that only needs unprojected moment sums.

Specialized closed forms cover centered partial sums, m-dependent sums,
and quadratic forms; their leading constants are evaluated from the
printed expressions at call time, never from cached decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import difference as diff
from .difference import DiffProfile
from .distributions import ProductSpace, exact_abs_moment
from .errors import (
    ArityMismatch,
    InvalidOrder,
    MissingProfileEntry,
    MomentDoesNotExist,
    ThirdMomentNotZero,
)
from .statistics import StatisticModel
from ._mdep_moments import mdep_abs_moment_sum, mdep_third_moment

D1_TERMWISE = "d1_termwise"
D1_AGGREGATE = "d1_aggregate"
D2_TERMWISE = "d2_termwise"
D2_AGGREGATE = "d2_aggregate"
PARTIAL_SUM_D1 = "partial_sum_d1"
PARTIAL_SUM_D2 = "partial_sum_d2"
MDEP_D1 = "m_dependent_d1"
MDEP_D2 = "m_dependent_d2"
QUADFORM_D1 = "quadratic_form_d1"


def _check_delta(delta: float) -> float:
    if not 0.0 < delta <= 1.0:
        raise InvalidOrder(f"delta must lie in (0, 1], got {delta}")
    return float(delta)


# ----------------------------------------------------------------------
# leading constants, always evaluated from their defining expressions
# ----------------------------------------------------------------------

def partial_sum_d1_constant(delta: float) -> float:
    """First-order partial-sum constant: 8 + 2^(2+delta)."""
    _check_delta(delta)
    return 8.0 + 2.0 ** (2.0 + delta)


def partial_sum_d2_constant(delta: float) -> float:
    """Second-order partial-sum constant:
    8 + 2^(2+delta) * (3^(delta/3) * (2 + 3^((3+delta)/3)))^(3/(3+delta)) + 2^(4+delta)."""
    _check_delta(delta)
    inner = 3.0 ** (delta / 3.0) * (2.0 + 3.0 ** ((3.0 + delta) / 3.0))
    return (
        8.0
        + 2.0 ** (2.0 + delta) * inner ** (3.0 / (3.0 + delta))
        + 2.0 ** (4.0 + delta)
    )


def m_dependent_d1_constant(m: int, delta: float) -> float:
    """(2m)^(2+delta) * (8(2m - 1) + 2^(2+delta))."""
    _check_delta(delta)
    if m < 1:
        raise ArityMismatch(f"window length must be >= 1, got {m}")
    return (2.0 * m) ** (2.0 + delta) * (8.0 * (2 * m - 1) + 2.0 ** (2.0 + delta))


def m_dependent_d2_constant(m: int, delta: float) -> float:
    """(2m)^(3+delta) * (16(4m - 2)^2 + 2^(3+delta)(4m - 2) + 2^(3+delta))."""
    _check_delta(delta)
    if m < 1:
        raise ArityMismatch(f"window length must be >= 1, got {m}")
    w = 4 * m - 2
    return (2.0 * m) ** (3.0 + delta) * (
        16.0 * w * w + 2.0 ** (3.0 + delta) * w + 2.0 ** (3.0 + delta)
    )


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    name: str
    value: float
    std_error: float = 0.0


@dataclass(frozen=True)
class BoundReport:
    """One evaluated bound: the total, its additive terms, and provenance.

    ``total`` always equals the compensated sum of the term values;
    ``formula`` spells out the algebraic expression the numbers came
    from; ``input_provenance`` names the profile mode (or ``closed_form``
    for the specialized families) that produced the inputs.
    """

    bound_id: str
    delta: float
    sigma: float
    total: float
    terms: tuple[Term, ...]
    formula: str
    input_provenance: str
    total_se: float = 0.0
    constants: tuple[tuple[str, float], ...] = ()
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "bound_id": self.bound_id,
            "delta": self.delta,
            "sigma": self.sigma,
            "total": self.total,
            "total_se": self.total_se,
            "terms": [
                {"name": t.name, "value": t.value, "std_error": t.std_error}
                for t in self.terms
            ],
            "constants": {name: value for name, value in self.constants},
            "formula": self.formula,
            "input_provenance": self.input_provenance,
            "meta": self.meta,
        }


def _finish(bound_id, delta, sigma, terms, formula, provenance,
            constants=(), meta=None) -> BoundReport:
    for t in terms:
        if not math.isfinite(t.value) or t.value < 0.0:
            raise ValueError(f"bound term {t.name} is invalid: {t.value}")
    total = math.fsum(t.value for t in terms)
    total_se = math.sqrt(math.fsum(t.std_error ** 2 for t in terms))
    return BoundReport(
        bound_id=bound_id, delta=delta, sigma=sigma, total=total,
        terms=tuple(terms), formula=formula, input_provenance=provenance,
        total_se=total_se, constants=tuple(constants), meta=meta or {},
    )


def _check_sigma(profile: DiffProfile) -> float:
    if not profile.sigma > 0.0:
        raise ValueError("bounds need a nondegenerate statistic (sigma > 0)")
    return profile.sigma


def _power_term_se(value, sums, exponents, ses) -> float:
    """Delta-method SE for c * prod_i S_i^(e_i)."""
    if value == 0.0:
        return 0.0
    rel = 0.0
    for s, e, se in zip(sums, exponents, ses):
        if s > 0:
            rel += (e * se / s) ** 2
    return value * math.sqrt(rel)


# ----------------------------------------------------------------------
# profile-driven bounds
# ----------------------------------------------------------------------

def d1_bound(profile: DiffProfile, form: str = "termwise") -> BoundReport:
    """First-order smooth-distance bound from a difference profile.

    ``form="termwise"`` uses the projected mixed entries; ``"aggregate"``
    needs only unprojected moment sums and is weaker by construction.
    """
    sigma = _check_sigma(profile)
    delta = profile.delta
    scale = sigma ** (2.0 + delta)
    if form == "termwise":
        profile.require(diff.MIX_D1_Z, diff.MIX_D1_F)
        s_z = profile.total(diff.MIX_D1_Z)
        s_f = profile.total(diff.MIX_D1_F)
        terms = [
            Term("quad_sensitivity_coupling", 2.0 * s_z / scale,
                 2.0 * profile.total_se(diff.MIX_D1_Z) / scale),
            Term("projected_difference", 2.0 ** (1.0 + delta) * s_f / scale,
                 2.0 ** (1.0 + delta) * profile.total_se(diff.MIX_D1_F) / scale),
        ]
        formula = (
            "(2/sigma^(2+delta)) sum_k E[(|D_k F|^delta + E_k|D_k F|^delta)"
            " |D~_k(beta) Z2|]"
            " + (2^(1+delta)/sigma^(2+delta)) sum_k E[(|D_k F|^(1+delta)"
            " + E_k|D_k F|^(1+delta)) |D~_k(alpha) F|]"
        )
    elif form == "aggregate":
        profile.require(diff.DF_2, diff.DZ2_D1)
        s2 = profile.total(diff.DF_2)
        sz = profile.total(diff.DZ2_D1)
        e1, e2 = delta / (2.0 + delta), 2.0 / (2.0 + delta)
        v1 = 4.0 * s2 ** e1 * sz ** e2 / scale
        v2 = 2.0 ** (2.0 + delta) * s2 / scale
        terms = [
            Term("quad_sensitivity_coupling", v1,
                 _power_term_se(v1, [s2, sz], [e1, e2],
                                [profile.total_se(diff.DF_2),
                                 profile.total_se(diff.DZ2_D1)])),
            Term("difference_moment_sum", v2,
                 2.0 ** (2.0 + delta) * profile.total_se(diff.DF_2) / scale),
        ]
        formula = (
            "(4/sigma^(2+delta)) (sum_k E|D_k F|^(2+delta))^(delta/(2+delta))"
            " (sum_k E|D_k Z2|^((2+delta)/2))^(2/(2+delta))"
            " + (2^(2+delta)/sigma^(2+delta)) sum_k E|D_k F|^(2+delta)"
        )
    else:
        raise ValueError(f"form must be 'termwise' or 'aggregate', got {form!r}")
    return _finish(
        D1_TERMWISE if form == "termwise" else D1_AGGREGATE,
        delta, sigma, terms, formula, profile.mode,
        meta={"params": profile.params.to_json()},
    )


def _gate_third_moment(profile: DiffProfile) -> None:
    ef3 = profile.ef3
    if math.isnan(ef3):
        raise MissingProfileEntry(
            "second-order bounds need E[F^3]; recompute the profile at level d2"
        )
    if profile.mode == "exact":
        tol = 1e-10 * max(1.0, profile.sigma ** 3)
    else:
        tol = 5.0 * profile.ef3_se + 1e-12
    if abs(ef3) > tol:
        raise ThirdMomentNotZero(
            f"E[F^3] = {ef3:.6e} exceeds tolerance {tol:.2e};"
            " second-order bounds require a vanishing third moment"
        )


def d2_bound(profile: DiffProfile, form: str = "termwise") -> BoundReport:
    """Second-order smooth-distance bound; requires E[F^3] = 0.

    The precondition is checked against the profile's own third-moment
    estimate (exactly in exact mode, within five standard errors for
    Monte Carlo profiles).
    """
    sigma = _check_sigma(profile)
    delta = profile.delta
    _gate_third_moment(profile)
    scale = sigma ** (3.0 + delta)
    if form == "termwise":
        profile.require(diff.MIX_D2_Z3, diff.MIX_D2_Z2, diff.MIX_D2_F)
        s3 = profile.total(diff.MIX_D2_Z3)
        s2 = profile.total(diff.MIX_D2_Z2)
        sf = profile.total(diff.MIX_D2_F)
        c = 2.0 ** (2.0 + delta)
        terms = [
            Term("cubic_correction_coupling", 4.0 * s3 / scale,
                 4.0 * profile.total_se(diff.MIX_D2_Z3) / scale),
            Term("quad_sensitivity_coupling", c * s2 / scale,
                 c * profile.total_se(diff.MIX_D2_Z2) / scale),
            Term("projected_difference", c * sf / scale,
                 c * profile.total_se(diff.MIX_D2_F) / scale),
        ]
        formula = (
            "(4/sigma^(3+delta)) sum_k E[(|D_k F|^delta + E_k|D_k F|^delta)"
            " |D~_k(gamma) Z3|]"
            " + (2^(2+delta)/sigma^(3+delta)) sum_k E[(|D_k F|^(1+delta)"
            " + E_k|D_k F|^(1+delta)) |D~_k(beta) Z2|]"
            " + (2^(2+delta)/sigma^(3+delta)) sum_k E[(|D_k F|^(2+delta)"
            " + E_k|D_k F|^(2+delta)) |D~_k(alpha) F|]"
        )
    elif form == "aggregate":
        profile.require(diff.DF_3, diff.DZ3, diff.DZ2_D2)
        sf = profile.total(diff.DF_3)
        sz3 = profile.total(diff.DZ3)
        sz2 = profile.total(diff.DZ2_D2)
        c = 2.0 ** (3.0 + delta)
        e_a = delta / (3.0 + delta)
        e_b = 3.0 / (3.0 + delta)
        e_c = (1.0 + delta) / (3.0 + delta)
        e_d = 2.0 / (3.0 + delta)
        v1 = 8.0 * sf ** e_a * sz3 ** e_b / scale
        v2 = c * sf ** e_c * sz2 ** e_d / scale
        v3 = c * sf / scale
        terms = [
            Term("cubic_correction_coupling", v1,
                 _power_term_se(v1, [sf, sz3], [e_a, e_b],
                                [profile.total_se(diff.DF_3),
                                 profile.total_se(diff.DZ3)])),
            Term("quad_sensitivity_coupling", v2,
                 _power_term_se(v2, [sf, sz2], [e_c, e_d],
                                [profile.total_se(diff.DF_3),
                                 profile.total_se(diff.DZ2_D2)])),
            Term("difference_moment_sum", v3,
                 c * profile.total_se(diff.DF_3) / scale),
        ]
        formula = (
            "(8/sigma^(3+delta)) (sum_k E|D_k F|^(3+delta))^(delta/(3+delta))"
            " (sum_k E|D_k Z3|^((3+delta)/3))^(3/(3+delta))"
            " + (2^(3+delta)/sigma^(3+delta)) (sum_k E|D_k F|^(3+delta))^((1+delta)/(3+delta))"
            " (sum_k E|D_k Z2|^((3+delta)/2))^(2/(3+delta))"
            " + (2^(3+delta)/sigma^(3+delta)) sum_k E|D_k F|^(3+delta)"
        )
    else:
        raise ValueError(f"form must be 'termwise' or 'aggregate', got {form!r}")
    return _finish(
        D2_TERMWISE if form == "termwise" else D2_AGGREGATE,
        delta, sigma, terms, formula, profile.mode,
        meta={"params": profile.params.to_json(), "ef3": profile.ef3},
    )


def lyapunov_ratio(profile: DiffProfile) -> float:
    """sum_k E|D_k F|^(2+delta) / sigma^(2+delta), the scale-free rate driver."""
    sigma = _check_sigma(profile)
    return profile.total(diff.DF_2) / sigma ** (2.0 + profile.delta)


# ----------------------------------------------------------------------
# specialized closed forms
# ----------------------------------------------------------------------

def partial_sum_d1_bound(space: ProductSpace, delta: float) -> BoundReport:
    """First-order bound for a centered sum from component moments alone."""
    delta = _check_delta(delta)
    lead = partial_sum_d1_constant(delta)
    sigma2 = math.fsum(space.variances())
    if not sigma2 > 0.0:
        raise ValueError("component variances sum to zero")
    sigma = math.sqrt(sigma2)
    moments = _component_moment_sum(space, 2.0 + delta)
    value = lead * moments / sigma ** (2.0 + delta)
    return _finish(
        PARTIAL_SUM_D1, delta, sigma,
        [Term("lyapunov_sum", value)],
        "(8 + 2^(2+delta)) / sigma^(2+delta) * sum_k E|X_k - mu_k|^(2+delta)",
        "closed_form",
        constants=(("lead_constant", lead),),
    )


def partial_sum_d2_bound(space: ProductSpace, delta: float) -> BoundReport:
    """Second-order bound for a centered sum; third moments must cancel."""
    delta = _check_delta(delta)
    lead = partial_sum_d2_constant(delta)
    sigma2 = math.fsum(space.variances())
    if not sigma2 > 0.0:
        raise ValueError("component variances sum to zero")
    sigma = math.sqrt(sigma2)
    third = math.fsum(c.central_moment(3) for c in space.components)
    if abs(third) > 1e-12 * max(1.0, sigma2 ** 1.5):
        raise ThirdMomentNotZero(
            f"component third moments sum to {third:.6e}; the second-order"
            " partial-sum bound requires zero"
        )
    moments = _component_moment_sum(space, 3.0 + delta)
    value = lead * moments / sigma ** (3.0 + delta)
    return _finish(
        PARTIAL_SUM_D2, delta, sigma,
        [Term("lyapunov_sum", value)],
        "(8 + 2^(2+delta) (3^(delta/3) (2 + 3^((3+delta)/3)))^(3/(3+delta))"
        " + 2^(4+delta)) / sigma^(3+delta) * sum_k E|X_k - mu_k|^(3+delta)",
        "closed_form",
        constants=(("lead_constant", lead),),
    )


def _component_moment_sum(space: ProductSpace, order: float) -> float:
    cache: dict = {}
    total = []
    for comp in space.components:
        key = (comp.family, tuple(sorted(comp.params.items())))
        if key not in cache:
            cache[key] = exact_abs_moment(comp, order)
        total.append(cache[key])
    return math.fsum(total)


def m_dependent_bound(model: StatisticModel, delta: float,
                      order: str = "d1") -> BoundReport:
    """Closed-form bound for sums of centered sliding-window kernels.

    Needs finite-support components (kernel moments are enumerated
    exactly).  The second-order form checks E[F^3] = 0 by exact
    enumeration of all window-overlapping kernel triples.
    """
    delta = _check_delta(delta)
    meta = model.meta
    if meta.get("family") not in ("m_dependent", "m_runs"):
        raise ArityMismatch("model is not an m-dependent sum")
    if model.variance is None:
        raise MomentDoesNotExist(
            "exact variance unavailable; finite-support components required"
        )
    m = meta["m"]
    sigma = math.sqrt(model.variance)
    if not sigma > 0.0:
        raise ValueError("m-dependent sum is degenerate (sigma = 0)")
    if order == "d1":
        lead = m_dependent_d1_constant(m, delta)
        mom = mdep_abs_moment_sum(model, 2.0 + delta)
        value = lead * mom / sigma ** (2.0 + delta)
        return _finish(
            MDEP_D1, delta, sigma, [Term("kernel_moment_sum", value)],
            "(2m)^(2+delta) (8(2m-1) + 2^(2+delta)) / sigma^(2+delta)"
            " * sum_i E|xi_i - E xi_i|^(2+delta)",
            "closed_form",
            constants=(("lead_constant", lead), ("window", float(m))),
        )
    if order == "d2":
        third = mdep_third_moment(model)
        if abs(third) > 1e-10 * max(1.0, sigma ** 3):
            raise ThirdMomentNotZero(
                f"E[F^3] = {third:.6e}; the second-order m-dependent bound"
                " requires zero"
            )
        lead = m_dependent_d2_constant(m, delta)
        mom = mdep_abs_moment_sum(model, 3.0 + delta)
        value = lead * mom / sigma ** (3.0 + delta)
        return _finish(
            MDEP_D2, delta, sigma, [Term("kernel_moment_sum", value)],
            "(2m)^(3+delta) (16(4m-2)^2 + 2^(3+delta)(4m-2) + 2^(3+delta))"
            " / sigma^(3+delta) * sum_i E|xi_i - E xi_i|^(3+delta)",
            "closed_form",
            constants=(("lead_constant", lead), ("window", float(m)),
                       ("third_moment", third)),
        )
    raise ValueError(f"order must be 'd1' or 'd2', got {order!r}")


def quadratic_form_d1_bound(model: StatisticModel, delta: float,
                            c_choice: float = 1.0) -> BoundReport:
    """Matrix-functional first-order bound for quadratic forms.

    The shape is exact in the coefficient matrix; ``c_choice`` sets the
    overall constant, to be calibrated once per family of matrices (the
    harness pins it at the smallest grid size).  Diagnostic functionals
    (max row energy ratio and the fourth-power trace) ride along in
    ``constants``.
    """
    delta = _check_delta(delta)
    if model.meta.get("family") != "quadratic_form":
        raise ArityMismatch("model is not a quadratic form")
    if not c_choice > 0.0:
        raise ValueError(f"c_choice must be positive, got {c_choice}")
    A = model.meta["matrix"]
    sigma = math.sqrt(model.variance)
    q = (2.0 + delta) / 2.0
    row_energy = (A * A).sum(axis=1)
    m_row = float(np.sum(row_energy ** q))
    a2 = A @ A
    m_cross = float(np.sum(np.abs(a2) ** q))
    m_abs = float(np.sum(np.sum(np.abs(A) ** q, axis=1) ** 2))
    nu = max(
        exact_abs_moment(comp, 2.0 + delta) for comp in model.space.components
    )
    if sigma > 0.0:
        scale = sigma ** (2.0 + delta)
        mixed = (
            c_choice * nu * nu
            * m_row ** (delta / (2.0 + delta))
            * (m_cross + m_abs) ** (2.0 / (2.0 + delta))
            / scale
        )
        rowterm = c_choice * nu * nu * m_row / scale
        l_tilde = float(row_energy.max()) / (sigma * sigma)
    else:
        # zero matrix: every functional vanishes before the division
        mixed = rowterm = l_tilde = 0.0
    trace_a4 = float(np.sum(a2 * a2))
    return _finish(
        QUADFORM_D1, delta, sigma,
        [Term("quad_sensitivity_coupling", mixed),
         Term("row_energy_sum", rowterm)],
        "c * nu^2 / sigma^(2+delta) * [ (sum_u (sum_v a_uv^2)^((2+delta)/2))^(delta/(2+delta))"
        " * (sum_uv |(A^2)_uv|^((2+delta)/2)"
        " + sum_k (sum_u |a_ku|^((2+delta)/2))^2)^(2/(2+delta))"
        " + sum_u (sum_v a_uv^2)^((2+delta)/2) ]",
        "matrix_functional",
        constants=(
            ("c_choice", c_choice),
            ("moment_factor", nu * nu),
            ("row_energy_ratio", l_tilde),
            ("trace_fourth_power", trace_a4),
        ),
    )
