"""Bound evaluators: profile-driven d1/d2 plus the closed special cases."""
import math

import numpy as np
import pytest

import steingauge as sg
from steingauge import bounds as bnd
from steingauge import difference as diff
from steingauge.errors import MomentDoesNotExist, ThirdMomentNotZero

ALPHA0 = diff.AlphaParams(0.0, 0.5, 0.5)


def _rademacher_profile(n, level, params=None):
    space = sg.ProductSpace.iid(sg.rademacher(), n)
    return diff.profile(sg.partial_sum(space), 1.0, params=params, level=level)


# ------------------------------------------------------------- profile bounds

def test_d1_aggregate_partial_sum_closed_value():
    for n in (4, 16, 64):
        rep = bnd.d1_bound(_rademacher_profile(n, "d1"), form="aggregate")
        assert rep.total == pytest.approx(8.0 / math.sqrt(n), rel=1e-12)
        assert rep.total == pytest.approx(
            math.fsum(t.value for t in rep.terms), abs=1e-12)


def test_d1_termwise_product_closed_value():
    for n in (5, 17, 65):
        prof = diff.profile(sg.product_example(n), 1.0, params=ALPHA0,
                            level="d1")
        rep = bnd.d1_bound(prof, form="termwise")
        assert rep.total == pytest.approx(8.0 / math.sqrt(n - 1), rel=1e-12)


def test_d2_partial_sum_closed_value_both_forms():
    for n in (4, 8, 16):
        prof = _rademacher_profile(n, "d2")
        for form in ("aggregate", "termwise"):
            rep = bnd.d2_bound(prof, form=form)
            assert rep.total == pytest.approx(24.0 / n, rel=1e-12)
        terms = {t.name: t.value for t in bnd.d2_bound(prof, form="termwise").terms}
        assert terms["cubic_correction_coupling"] == pytest.approx(8.0 / n, rel=1e-12)
        assert terms["quad_sensitivity_coupling"] == 0.0
        assert terms["projected_difference"] == pytest.approx(16.0 / n, rel=1e-12)


def test_d2_product_closed_value():
    for n in (5, 17):
        prof = diff.profile(sg.product_example(n), 1.0,
                            params=diff.AlphaParams(0.0, 0.5, 0.0), level="d2")
        rep = bnd.d2_bound(prof, form="termwise")
        assert rep.total == pytest.approx(24.0 / (n - 1), rel=1e-12)


def test_holder_ordering_and_term_sum():
    # symmetric signs keep E[F^3] = 0 so the d2 gate stays open
    space = sg.ProductSpace.iid(sg.rademacher(), 3)
    model = sg.black_box(space, lambda x: x[0] * x[1] + 0.3 * x[2]
                         + 0.7 * x[0] * x[2])
    for delta in (0.25, 0.5, 1.0):
        prof = diff.profile(model, delta, level="d2")
        for maker in (bnd.d1_bound, bnd.d2_bound):
            agg = maker(prof, form="aggregate")
            term = maker(prof, form="termwise")
            assert agg.total >= term.total - 1e-12
            for rep in (agg, term):
                assert rep.total == pytest.approx(
                    math.fsum(t.value for t in rep.terms), abs=1e-12)
                assert rep.sigma == prof.sigma
                assert rep.delta == delta


def test_scale_robustness_of_d1_totals():
    # F -> cF scales sigma by c and p-th diff moments by c^p; every displayed
    # term is degree-0 homogeneous so the totals cannot move
    space = sg.ProductSpace.iid(sg.rademacher(), 5)
    totals = {}
    for c in (1.0, 0.5, 3.0):
        model = sg.black_box(
            space, lambda x, c=c: c * (x[0] + x[1] + x[2] + x[3]) * x[4])
        prof = diff.profile(model, 1.0, params=ALPHA0, level="d1")
        totals[c] = {form: bnd.d1_bound(prof, form=form).total
                     for form in ("termwise", "aggregate")}
    for form in ("termwise", "aggregate"):
        assert totals[0.5][form] == pytest.approx(totals[1.0][form], rel=1e-10)
        assert totals[3.0][form] == pytest.approx(totals[1.0][form], rel=1e-10)
    # c = 1 is product_example(5) itself, so the black-box enumeration route
    # must agree with the hook-backed profile route
    hook = diff.profile(sg.product_example(5), 1.0, params=ALPHA0, level="d1")
    assert bnd.d1_bound(hook, form="termwise").total == pytest.approx(
        totals[1.0]["termwise"], rel=1e-10)


def test_sigma_zero_rejected():
    space = sg.ProductSpace.iid(sg.rademacher(), 3)
    prof = diff.profile(sg.black_box(space, lambda x: 2.5), 1.0, level="d1")
    with pytest.raises(ValueError):
        bnd.d1_bound(prof)


def test_lyapunov_ratio_examples():
    assert bnd.lyapunov_ratio(_rademacher_profile(4, "d1")) == 0.5
    assert bnd.lyapunov_ratio(_rademacher_profile(1, "d1")) == 1.0
    prof = diff.profile(sg.product_example(5), 1.0, params=ALPHA0, level="d1")
    assert bnd.lyapunov_ratio(prof) == pytest.approx(2.0, rel=1e-12)


# --------------------------------------------------------- partial-sum bounds

def test_partial_sum_d1_values():
    assert bnd.partial_sum_d1_constant(1.0) == 16.0
    r4 = sg.ProductSpace.iid(sg.rademacher(), 4)
    assert bnd.partial_sum_d1_bound(r4, 1.0).total == 8.0
    r1 = sg.ProductSpace.iid(sg.rademacher(), 1)
    assert bnd.partial_sum_d1_bound(r1, 1.0).total == 16.0
    u100 = sg.ProductSpace.iid(sg.uniform_symmetric(math.sqrt(3.0)), 100)
    got = bnd.partial_sum_d1_bound(u100, 1.0).total
    assert got == pytest.approx(2.078460969082653, rel=1e-12)
    # quadrature oracle: E|X|^3 = 3 sqrt(3) / 4 per component
    assert got == pytest.approx(16.0 * 100 * 3.0 * math.sqrt(3.0) / 4.0 / 1000.0,
                                rel=1e-12)


def test_partial_sum_d2_constant_two_routes():
    c1 = bnd.partial_sum_d2_constant(1.0)
    assert c1 == 82.00062370003998
    alt = 40.0 + 8.0 * (3.0 ** (1.0 / 3.0) * (2.0 + 3.0 ** (4.0 / 3.0))) ** 0.75
    assert c1 == alt
    assert abs(c1 - 82.0) <= 0.1


def test_partial_sum_d2_rademacher_scaling():
    c1 = bnd.partial_sum_d2_constant(1.0)
    for n in (4, 16, 64):
        space = sg.ProductSpace.iid(sg.rademacher(), n)
        rep = bnd.partial_sum_d2_bound(space, 1.0)
        assert rep.total == pytest.approx(c1 / n, rel=1e-12)
        assert dict(rep.constants)["lead_constant"] == c1


def test_partial_sum_d2_skew_gate():
    space = sg.ProductSpace.iid(sg.centered_exponential(1.0), 3)
    with pytest.raises(ThirdMomentNotZero):
        bnd.partial_sum_d2_bound(space, 1.0)


def test_partial_sum_heavy_tail_gate():
    space = sg.ProductSpace.iid(sg.symmetric_pareto(2.5), 4)
    with pytest.raises(MomentDoesNotExist):
        bnd.partial_sum_d1_bound(space, 1.0)  # needs 3rd absolute moment


# ---------------------------------------------------------- m-dependent bounds

def test_m_dependent_constants():
    assert bnd.m_dependent_d1_constant(1, 1.0) == 128.0
    assert bnd.m_dependent_d2_constant(1, 1.0) == 1792.0
    assert bnd.m_dependent_d1_constant(2, 1.0) == 2048.0
    assert bnd.m_dependent_d2_constant(2, 1.0) == 176128.0


def test_m_dependent_constants_monotone_in_m():
    for delta in (0.25, 0.5, 1.0):
        for make in (bnd.m_dependent_d1_constant, bnd.m_dependent_d2_constant):
            vals = [make(m, delta) for m in (1, 2, 3)]
            assert vals[0] < vals[1] < vals[2]


def test_m_runs_bound_values():
    # 15 windows over 16 fair signs; unit kernel moments
    runs = sg.m_runs(sg.ProductSpace.iid(sg.rademacher(), 16), 2)
    d1 = bnd.m_dependent_bound(runs, 1.0, order="d1")
    assert d1.total == pytest.approx(2048.0 / math.sqrt(15.0), rel=1e-12)
    assert dict(d1.constants)["lead_constant"] == 2048.0
    d2 = bnd.m_dependent_bound(runs, 1.0, order="d2")
    assert d2.total == pytest.approx(176128.0 / 15.0, rel=1e-12)


def test_m_runs_d2_skew_gate():
    biased = sg.ProductSpace.iid(sg.finite_support([(-1.0, 0.3), (1.0, 0.7)]), 8)
    with pytest.raises(ThirdMomentNotZero):
        bnd.m_dependent_bound(sg.m_runs(biased, 2), 1.0, order="d2")


def test_m_runs_matches_partial_sum_at_window_one():
    space = sg.ProductSpace.iid(sg.rademacher(), 6)
    one = bnd.m_dependent_bound(sg.m_runs(space, 1), 1.0, order="d1")
    assert one.total == pytest.approx(128.0 / math.sqrt(6.0), rel=1e-12)


# --------------------------------------------------------- quadratic form bound

def test_quadratic_form_zero_matrix():
    space = sg.ProductSpace.iid(sg.rademacher(), 3)
    rep = bnd.quadratic_form_d1_bound(sg.quadratic_form(space, np.zeros((3, 3))),
                                      1.0)
    assert rep.total == 0.0
    assert all(t.value == 0.0 for t in rep.terms)


def test_quadratic_form_row_functional_n2():
    space = sg.ProductSpace.iid(sg.rademacher(), 2)
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    rep = bnd.quadratic_form_d1_bound(sg.quadratic_form(space, A), 1.0)
    terms = {t.name: t.value for t in rep.terms}
    assert terms["row_energy_sum"] == pytest.approx(2.0, rel=1e-12)
    assert rep.total == pytest.approx(math.fsum(terms.values()), abs=1e-12)


def test_quadratic_form_circulant_trace():
    n = 8
    A = np.zeros((n, n))
    for u in range(n):
        A[u, (u + 1) % n] = 1.0
        A[u, (u - 1) % n] = 1.0
    rep = bnd.quadratic_form_d1_bound(
        sg.quadratic_form(sg.ProductSpace.iid(sg.rademacher(), n), A), 1.0,
        c_choice=2.0)
    consts = dict(rep.constants)
    direct = float(np.trace(np.linalg.matrix_power(A, 4)))
    double_sum = float(((A @ A) ** 2).sum())
    assert abs(direct - double_sum) <= 1e-9
    assert consts["trace_fourth_power"] == pytest.approx(direct, abs=1e-9)
    # max row energy 2 over sigma^2 = n
    assert consts["row_energy_ratio"] == pytest.approx(2.0 / n, rel=1e-12)
    assert consts["c_choice"] == 2.0
    assert rep.total == pytest.approx(
        2.0 * bnd.quadratic_form_d1_bound(
            sg.quadratic_form(sg.ProductSpace.iid(sg.rademacher(), n), A),
            1.0).total,
        rel=1e-12)


def test_exact_abs_moment_helper():
    assert bnd.exact_abs_moment(sg.rademacher(), 3.0) == 1.0
    assert bnd.exact_abs_moment(sg.uniform_symmetric(math.sqrt(3.0)), 3.0) == (
        pytest.approx(3.0 * math.sqrt(3.0) / 4.0, rel=1e-12))
