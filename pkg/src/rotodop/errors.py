class RotodopError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModeSet(RotodopError):
    pass


class ModeNotFound(RotodopError):
    pass


class DomainError(RotodopError, ValueError):
    pass


class UnsupportedComposition(RotodopError):
    pass


class NonUnitaryError(RotodopError):
    pass


class PhysicalityError(RotodopError):
    pass


class ConvergenceError(RotodopError):
    pass


class ConsistencyError(RotodopError):
    """Two independent evaluation routes disagree beyond tolerance."""


class TruncationError(RotodopError):
    pass


class ConfigError(RotodopError):
    pass


class ValidityWarning(UserWarning):
    """An approximation's validity condition is not met (result still returned)."""
