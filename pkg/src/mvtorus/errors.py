"""Exception and warning types raised across the package."""


class MVTorusError(Exception):
    """Base class for all package errors."""


class GridTooSmall(MVTorusError, ValueError):
    pass


class GridMismatch(MVTorusError, ValueError):
    pass


class NonPositiveDensity(MVTorusError, ValueError):
    pass


class OverflowRisk(MVTorusError, FloatingPointError):
    pass


class DomainError(MVTorusError, ValueError):
    pass


class NoConvergence(MVTorusError, RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BlowUp(MVTorusError, FloatingPointError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InsufficientData(MVTorusError, ValueError):
    pass


class ConfigError(MVTorusError, ValueError):
    pass


class UnknownTarget(MVTorusError, KeyError):
    pass


class NotStationaryWarning(UserWarning):
    """The density handed to a linearisation is not a stationary state."""
