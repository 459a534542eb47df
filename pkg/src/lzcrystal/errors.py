"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` used by the command-line front-end.
"""


class LZError(Exception):
    exit_code = 1


class UsageError(LZError, ValueError):
    exit_code = 2


class DomainError(LZError, ValueError):
    exit_code = 4


class ConvergenceError(LZError, RuntimeError):
    exit_code = 3

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class InstabilityError(LZError, RuntimeError):
    """Hessian has a negative eigenvalue: the configuration is a saddle."""

    exit_code = 5


class DegeneracyError(LZError, RuntimeError):
    """A non-zigzag mode is (nearly) soft so adiabatic elimination fails."""

    exit_code = 5


class ResolutionError(LZError, RuntimeError):
    exit_code = 6


class NotFoundError(LZError, LookupError):
    exit_code = 7


class IntegrationError(LZError, RuntimeError):
    exit_code = 8


class FitError(LZError, RuntimeError):
    exit_code = 9

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm
