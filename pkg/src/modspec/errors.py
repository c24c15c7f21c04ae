"""Exception hierarchy shared by every module of the package."""


class ModSpecError(Exception):
    """Base class for all package errors."""


class ValidationError(ModSpecError, ValueError):
    """Invalid parameters or configuration.

    ``path`` names the offending field (e.g. ``modes.mech.occupation``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ModeReferenceError(ValidationError):
    """A modulation or coupling refers to a mode that was never declared."""


class ContractError(ModSpecError, ValueError):
    """An operation was called outside its documented preconditions."""


class NumericalError(ModSpecError, ArithmeticError):
    """A linear solve or integration failed numerically.

    ``omega`` and ``condition`` are attached when the failure comes from a
    transfer-matrix inversion.
    """

    def __init__(self, message, omega=None, condition=None):
        self.omega = omega
        self.condition = condition
        super().__init__(message)


class ResolutionError(ModSpecError, ValueError):
    """A time series is too short for the requested spectral resolution."""
