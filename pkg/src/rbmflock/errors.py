"""Exception hierarchy shared by all solvers."""


class RbmError(Exception):
    """Base class for package errors."""


class ConfigurationError(RbmError, ValueError):
    """Invalid parameters, detected before any stepping happens."""


class DomainError(RbmError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DegenerateSystemError(ConfigurationError):
    """System too small for the requested dynamics (e.g. a single particle)."""


class PoolTooSmallError(ConfigurationError):
    pass


class GridMismatchError(RbmError, ValueError):
    pass


class NumericalFailure(RbmError, FloatingPointError):
    """Non-finite state produced during time stepping."""

    def __init__(self, message, step_index=None):
        if step_index is not None:
            message = f"{message} (step {step_index})"
        super().__init__(message)
        self.step_index = step_index
