"""Exception types shared across the package."""


class SteinGaugeError(Exception):
    """Base class for all package-specific errors."""


class InvalidOrder(SteinGaugeError):
    """A moment order or smoothness exponent is outside its admissible range."""


class MomentDoesNotExist(SteinGaugeError):
    """A requested absolute moment is infinite for the given distribution."""


class SupportTooLarge(SteinGaugeError):
    """The product support exceeds the enumeration cap."""


class ArityMismatch(SteinGaugeError):
    """A statistic was constructed or called with an incompatible arity."""


class AsymmetricMatrix(SteinGaugeError):
    """A coefficient matrix is not symmetric."""


class NonzeroDiagonal(SteinGaugeError):
    """A coefficient matrix has nonzero diagonal entries."""


class BadStandardization(SteinGaugeError):
    """Components are not exactly mean-zero and unit-variance where required."""


class BudgetMissing(SteinGaugeError):
    """A Monte Carlo path was requested without a sampling budget."""


class MissingProfileEntry(SteinGaugeError):
    """A bound evaluator needs a profile entry that was not computed."""


class ThirdMomentNotZero(SteinGaugeError):
    """A second-order bound was requested for a statistic with E[F^3] != 0."""


class QuadratureFailure(SteinGaugeError):
    """A numerical integration did not meet its accuracy contract."""


class EmptySample(SteinGaugeError):
    """A distance estimator received an empty sample."""


class PanelViolatesNorms(SteinGaugeError):
    """A test-function panel member exceeds its declared derivative norms."""


class DegenerateFit(SteinGaugeError):
    """A rate fit was attempted on unusable data."""


class ConfigError(SteinGaugeError):
    """An experiment configuration failed validation."""
