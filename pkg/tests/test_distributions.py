"""Component specs: exact moments, sampling, and the enumeration oracle."""
import math

import numpy as np
import pytest

import steingauge as sg
from steingauge.errors import MomentDoesNotExist, SupportTooLarge

# frozen from scratch quadrature/closed-form computations (notes kept
# outside the repo): E|X-1|^3 for a unit-rate exponential, E|X|^3 for
# the unit-variance symmetric uniform
CENTERED_EXP_ABS3 = 2.414553294057308
UNIFORM_ROOT3_ABS3 = 1.299038105676658


@pytest.mark.parametrize("spec, p, want, tol", [
    (sg.rademacher(), 3.0, 1.0, 0.0),
    (sg.uniform_symmetric(math.sqrt(3.0)), 2.0, 1.0, 1e-14),
    (sg.uniform_symmetric(math.sqrt(3.0)), 3.0, UNIFORM_ROOT3_ABS3, 1e-12),
    (sg.centered_exponential(1.0), 3.0, CENTERED_EXP_ABS3, 1e-10),
    (sg.symmetric_pareto(3.5, scale=1.0), 2.5, 3.5, 1e-12),
    (sg.finite_support([(0.0, 0.5), (2.0, 0.5)]), 3.0, 1.0, 0.0),
])
def test_exact_abs_moment_closed_forms(spec, p, want, tol):
    got = sg.exact_abs_moment(spec, p)
    assert got == pytest.approx(want, abs=tol)


def test_pareto_default_scale_is_unit_variance():
    spec = sg.symmetric_pareto(3.5)
    assert spec.variance == pytest.approx(1.0, abs=1e-12)
    assert spec.moment_ceiling == 3.5


def test_moments_above_ceiling_rejected():
    spec = sg.symmetric_pareto(3.2)
    with pytest.raises(MomentDoesNotExist):
        sg.exact_abs_moment(spec, 3.2)
    with pytest.raises(MomentDoesNotExist):
        sg.exact_abs_moment(spec, 4.0)


@pytest.mark.parametrize("spec", [
    sg.rademacher(),
    sg.uniform_symmetric(math.sqrt(3.0)),
    sg.centered_exponential(1.0),
    sg.symmetric_pareto(3.5),
    sg.finite_support([(-1.0, 0.25), (0.0, 0.25), (1.5, 0.5)]),
])
def test_quadrature_agrees_with_monte_carlo(spec):
    # one shared 10^7 draw per family, all exponents below the ceiling
    rng = np.random.default_rng(20240811)
    draws = spec.draw(rng, 10_000_000) - spec.mean
    for p in (2.0, 2.5, 3.0, 3.5, 4.0):
        if p >= spec.moment_ceiling:
            continue
        powered = np.abs(draws) ** p
        mc = powered.mean()
        se = powered.std(ddof=1) / math.sqrt(len(powered))
        exact = sg.exact_abs_moment(spec, p)
        assert abs(mc - exact) <= 5.0 * se, (spec.family, p, mc, exact, se)


def test_sample_determinism():
    space = sg.ProductSpace.iid(sg.centered_exponential(2.0), 5)
    a = sg.sample(space, seed=99, count=300)
    b = sg.sample(space, seed=99, count=300)
    assert a.shape == (300, 5)
    assert np.array_equal(a, b)
    c = sg.sample(space, seed=100, count=300)
    assert not np.array_equal(a, c)


def test_sample_support_and_clt_mean():
    space = sg.ProductSpace.iid(sg.rademacher(), 3)
    rows = sg.sample(space, seed=1, count=4)
    assert rows.shape == (4, 3)
    assert set(np.unique(rows)) <= {-1.0, 1.0}

    one = sg.ProductSpace.iid(sg.rademacher(), 1)
    big = sg.sample(one, seed=7, count=1_000_000)
    assert abs(big.mean()) <= 4e-3  # 4 / sqrt(count)


def test_sample_rejects_empty():
    space = sg.ProductSpace.iid(sg.rademacher(), 2)
    with pytest.raises(ValueError):
        sg.sample(space, seed=0, count=0)


def test_enumerate_expectation_examples():
    r2 = sg.ProductSpace.iid(sg.rademacher(), 2)
    assert sg.enumerate_expectation(r2, lambda x: x[0] * x[1]) == 0.0

    r3 = sg.ProductSpace.iid(sg.rademacher(), 3)
    assert sg.enumerate_expectation(r3, lambda x: x.sum() ** 2) == 3.0

    fs = sg.ProductSpace.iid(sg.finite_support([(0.0, 0.5), (2.0, 0.5)]), 1)
    assert sg.enumerate_expectation(fs, lambda x: x[0] ** 3) == 4.0


def test_enumerate_expectation_normalized_exactly():
    dyadic = sg.ProductSpace.iid(sg.rademacher(), 10)
    assert sg.enumerate_expectation(dyadic, lambda x: 1.0) == 1.0
    skew = sg.ProductSpace.iid(sg.finite_support([(-1.0, 0.3), (1.0, 0.7)]), 6)
    assert sg.enumerate_expectation(skew, lambda x: 1.0) == 1.0


def test_enumerate_expectation_chunk_invariant():
    space = sg.ProductSpace.iid(sg.finite_support([(-1.0, 0.3), (1.0, 0.7)]), 5)
    g = lambda x: math.sin(x.sum())  # noqa: E731
    assert (sg.enumerate_expectation(space, g, chunk=3)
            == sg.enumerate_expectation(space, g, chunk=1 << 16))


def test_enumerate_expectation_vectorized_matches():
    space = sg.ProductSpace.iid(sg.rademacher(), 6)
    loop = sg.enumerate_expectation(space, lambda x: (x.sum() + 0.5) ** 4)
    vec = sg.enumerate_expectation(
        space, lambda X: (X.sum(axis=1) + 0.5) ** 4, vectorized=True
    )
    assert loop == pytest.approx(vec, rel=1e-15)


def test_enumerate_expectation_guards():
    cont = sg.ProductSpace.iid(sg.uniform_symmetric(1.0), 2)
    with pytest.raises(SupportTooLarge):
        sg.enumerate_expectation(cont, lambda x: 0.0)
    huge = sg.ProductSpace.iid(sg.rademacher(), 30)
    with pytest.raises(SupportTooLarge):
        sg.enumerate_expectation(huge, lambda x: 0.0)
    assert not huge.is_enumerable
    assert huge.support_size() == 2 ** 30


def test_spec_json_round_trip():
    for spec in (sg.rademacher("r"), sg.uniform_symmetric(2.5),
                 sg.centered_exponential(0.7, label="e"),
                 sg.symmetric_pareto(3.2),
                 sg.finite_support([(-2.0, 0.25), (1.0, 0.75)])):
        back = sg.DistributionSpec.from_json(spec.to_json())
        assert back == spec
        assert back.variance == spec.variance


def test_product_space_json_round_trip():
    space = sg.ProductSpace((sg.rademacher(), sg.symmetric_pareto(3.5),
                             sg.finite_support([(0.0, 0.5), (2.0, 0.5)])))
    back = sg.ProductSpace.from_json(space.to_json())
    assert back == space


def test_finite_support_validation():
    with pytest.raises(ValueError):
        sg.finite_support([(0.0, 0.4), (1.0, 0.4)])  # mass 0.8
    with pytest.raises(ValueError):
        sg.finite_support([(0.0, -0.5), (1.0, 1.5)])
    with pytest.raises(ValueError):
        sg.symmetric_pareto(2.0)  # needs a finite second-plus moment
