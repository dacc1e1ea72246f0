"""Exception types shared across the package."""


class GoalPinnError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(GoalPinnError, ValueError):
    """An input point or batch has the wrong spatial dimension."""


class NumericalError(GoalPinnError, FloatingPointError):
    """A non-finite value appeared during evaluation or training.

    Carries optional context (epoch, point index) to locate the failure.
    """

    def __init__(self, message, epoch=None, point_index=None):
        super().__init__(message)
        self.epoch = epoch
        self.point_index = point_index


class DegenerateDensityError(GoalPinnError, ValueError):
    """All indicator values are zero or non-finite; no sampling density exists."""


class UndefinedIndicatorIndexError(GoalPinnError, ZeroDivisionError):
    """The indicator index is undefined because the estimator value is zero."""


class ConfigurationError(GoalPinnError, ValueError):
    """Inconsistent or incomplete run configuration."""
