"""Computable normal-approximation error bounds for nonlinear statistics
of independent inputs, with the empirical machinery to verify them.

The package is organized bottom-up:

* :mod:`steingauge.distributions` -- component laws, exact moments,
  deterministic sampling, finite-support enumeration
* :mod:`steingauge.statistics`    -- statistic families with closed-form
  coordinate differences where available
* :mod:`steingauge.difference`    -- difference operators, filtration
  projections, and per-coordinate moment profiles
* :mod:`steingauge.bounds`        -- the first- and second-order bounds
  with runtime-evaluated constants
* :mod:`steingauge.stein`         -- the equation solver and smoothness
  verification
* :mod:`steingauge.distances`     -- empirical W1 and a smooth-class
  panel lower bound
* :mod:`steingauge.harness`       -- config-driven experiments, rate
  fits, verification batteries
"""

from .distributions import (
    DistributionSpec,
    ProductSpace,
    centered_exponential,
    enumerate_expectation,
    exact_abs_moment,
    finite_support,
    rademacher,
    sample,
    symmetric_pareto,
    uniform_symmetric,
)
from .statistics import (
    StatisticModel,
    black_box,
    circulant_band,
    m_dependent_sum,
    m_runs,
    partial_sum,
    product_example,
    quadratic_form,
)
from .difference import (
    AlphaParams,
    DiffProfile,
    Estimate,
    MCBudget,
    covariance_identity_residual,
    diff_alpha,
    diff_plain,
    profile,
    third_moment_check,
    z_alpha,
    z_alpha_beta,
)
from .bounds import (
    BoundReport,
    d1_bound,
    d2_bound,
    lyapunov_ratio,
    m_dependent_bound,
    m_dependent_d1_constant,
    m_dependent_d2_constant,
    partial_sum_d1_bound,
    partial_sum_d1_constant,
    partial_sum_d2_bound,
    partial_sum_d2_constant,
    quadratic_form_d1_bound,
)
from .stein import (
    SteinSolution,
    TestFunction,
    battery,
    holder_check_first,
    holder_check_second,
    solve,
)
from .distances import DistanceEstimate, d2_lower, standard_panel, w1_to_normal
from .harness import (
    ExperimentConfig,
    RateFit,
    fit_rate,
    identity_battery,
    inequality_battery,
    load_config,
    run_experiment,
    stein_battery,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AlphaParams",
    "BoundReport",
    "DiffProfile",
    "DistanceEstimate",
    "DistributionSpec",
    "Estimate",
    "ExperimentConfig",
    "MCBudget",
    "ProductSpace",
    "RateFit",
    "StatisticModel",
    "SteinSolution",
    "TestFunction",
    "battery",
    "black_box",
    "centered_exponential",
    "circulant_band",
    "covariance_identity_residual",
    "d1_bound",
    "d2_bound",
    "d2_lower",
    "diff_alpha",
    "diff_plain",
    "enumerate_expectation",
    "errors",
    "exact_abs_moment",
    "finite_support",
    "fit_rate",
    "holder_check_first",
    "holder_check_second",
    "identity_battery",
    "inequality_battery",
    "load_config",
    "lyapunov_ratio",
    "m_dependent_bound",
    "m_dependent_d1_constant",
    "m_dependent_d2_constant",
    "m_dependent_sum",
    "m_runs",
    "partial_sum",
    "partial_sum_d1_bound",
    "partial_sum_d1_constant",
    "partial_sum_d2_bound",
    "partial_sum_d2_constant",
    "product_example",
    "profile",
    "quadratic_form",
    "quadratic_form_d1_bound",
    "rademacher",
    "run_experiment",
    "sample",
    "solve",
    "standard_panel",
    "stein_battery",
    "symmetric_pareto",
    "third_moment_check",
    "uniform_symmetric",
    "w1_to_normal",
    "z_alpha",
    "z_alpha_beta",
]
