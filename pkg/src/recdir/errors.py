"""Exception types shared across the package."""


class RecdirError(Exception):
    """Base class for all package errors."""


class ValidationError(RecdirError, ValueError):
    """Bad input: wrong shape, empty interval, unstable parameters, ..."""


class SingularFitError(RecdirError, ArithmeticError):
    """Least-squares system too ill-conditioned to solve."""

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class DegenerateError(RecdirError, ArithmeticError):
    """A ratio or statistic is undefined (zero variance, zero baseline)."""


class DataError(RecdirError):
    """Input data file missing, malformed or too short."""


class NumericalFailure(RecdirError):
    """Too many runs or cells failed numerically for the result to stand."""


class ConfigError(RecdirError, ValueError):
    """Configuration file unreadable, unknown key, or value of the wrong type."""
