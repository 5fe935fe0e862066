"""Exception types shared across the package."""


class PathGibbsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPotentialError(PathGibbsError):
    """Potential evaluated to a non-finite value at a grid node."""


class NumericFailureError(PathGibbsError):
    """An iterative numerical routine failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DomainError(PathGibbsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SupportError(PathGibbsError):
    """Point lies outside the numerical support of the reference process."""


class InvalidEnergyError(PathGibbsError):
    """Energy evaluation produced a non-finite value."""


class SingularKernelError(PathGibbsError):
    """Pair kernel is singular at an evaluated argument."""


class UnboundedTailError(PathGibbsError):
    """Boundary interaction cannot be truncated with a controlled tail."""


class AlignmentError(PathGibbsError):
    """A duration is not aligned with the time grid."""


class UnsupportedDimensionError(PathGibbsError):
    """Operation only available in a specific spatial dimension."""


class BudgetExceededError(PathGibbsError):
    """Enumeration or sampling budget would be exceeded."""


class ConfigError(PathGibbsError):
    """Configuration file or key is invalid."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class EstimatorError(PathGibbsError):
    """An estimator refuses to report (e.g. effective sample size too low)."""


class CachedDensityError(PathGibbsError):
    """Cached chain log-density deviates from recomputation; indicates a bug."""
