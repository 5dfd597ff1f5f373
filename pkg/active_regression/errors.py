"""
errors.py

Exception hierarchy. Every error raised on purpose by the package derives from
ActiveRegressionError and carries the process exit code the command-line front
end reports for it.
"""

from active_regression.config import EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE, EXIT_VERIFICATION


class ActiveRegressionError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_NUMERICAL


class UsageError(ActiveRegressionError):
    exit_code = EXIT_USAGE


class DomainError(ActiveRegressionError, ValueError):
    """A scalar argument lies outside the range an operation is defined on."""

    exit_code = EXIT_USAGE


class ShapeError(ActiveRegressionError, ValueError):
    exit_code = EXIT_DATA


class SchemaError(ActiveRegressionError, ValueError):
    exit_code = EXIT_DATA


class IoError(ActiveRegressionError, OSError):
    exit_code = EXIT_DATA


class BasisMismatchError(ActiveRegressionError, ValueError):
    exit_code = EXIT_DATA


class NumericalError(ActiveRegressionError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class ConvergenceError(NumericalError):
    pass


class SingularMatrixError(NumericalError):
    pass


class DegenerateUpdateError(NumericalError):
    pass


class RankError(NumericalError):
    pass


class BarrierViolationError(NumericalError):
    """The spectrum of the sampler's running matrix left the (l, r) window."""


class IterationCapError(ConvergenceError):
    """The sampler hit max_iters; `partial` holds the diagnostics so far."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class BoundOverflowError(ActiveRegressionError, OverflowError):
    """An exact integer bound does not fit in 64 bits; `log_bound` is its natural log."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, log_bound: float):
        super().__init__(message)
        self.log_bound = log_bound


class VerificationFailure(ActiveRegressionError):
    exit_code = EXIT_VERIFICATION
