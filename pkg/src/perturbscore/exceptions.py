"""Exception hierarchy.

Validation problems (bad inputs, bad configuration) derive from
``ValueError``; numerical failures derive from :class:`NumericalError`.
The command-line front end maps the first family to exit status 1 and the
second to exit status 2.
"""


class PerturbScoreError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PerturbScoreError, ValueError):
    """An input violates a documented precondition."""


class DomainError(ValidationError):
    """A parameter or observation lies outside its admissible set."""


class SupportViolationError(ValidationError):
    """An observation has zero null density, so the score ratio is undefined."""


class ConfigError(ValidationError):
    """Malformed or incomplete run configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(ValidationError):
    """Malformed input data file."""


class UnsupportedDimensionError(ValidationError):
    """The requested operation is only defined for low parameter dimension."""


class NumericalError(PerturbScoreError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result."""


class NonFiniteVarianceError(NumericalError):
    """The covariance integral does not converge."""


class DegenerateModelError(NumericalError):
    """Fisher information is singular (e.g. duplicated support points)."""


class DegenerateFitError(NumericalError):
    """Mixture fitting cannot proceed (all responsibilities vanish)."""


class SingularityError(NumericalError):
    """The kernel diagonal vanishes at the requested parameter."""


class ClassificationConflictError(NumericalError):
    """The numerical order of a singular point contradicts its declared class."""


class CurvatureError(NumericalError):
    """A bordered covariance determinant is negative beyond tolerance."""


class BracketError(NumericalError):
    """Root bracketing failed for a critical value."""


class IllConditionedKernelError(NumericalError):
    """The correlation matrix could not be factorized even after jitter."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""
