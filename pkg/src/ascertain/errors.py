"""Exception types shared across the package."""


class AscertainError(Exception):
    """Base class for all package errors."""


class ValidationError(AscertainError):
    """Invalid input data, configuration, or parameter values."""


class NumericalError(AscertainError):
    """A numerical procedure failed to meet its accuracy contract."""


class FitError(NumericalError):
    """Optimization did not converge.

    Carries the best result found so callers can inspect how far the
    optimizer got before giving up.
    """

    def __init__(self, message, best_result=None):
        super().__init__(message)
        self.best_result = best_result
