"""
Exception hierarchy shared by every stplab component.
"""


class STPLabError(Exception):
    """Base class for all simulator errors."""


class CapacityError(STPLabError):
    pass


class PreconditionError(STPLabError):
    pass


class ZeroBranch(STPLabError):
    """A forced outcome, or a non-unitary factor, left (numerically) nothing behind."""


class NumericalError(STPLabError):
    pass


class RetryExhausted(STPLabError):
    pass


class EmptyPool(STPLabError):
    pass


class NotFound(STPLabError):
    pass


class SingularOperatorError(STPLabError):
    pass


class LogUndefinedError(STPLabError):
    pass


class VerificationFailed(STPLabError):
    """An acceptance check run from the command line did not hold."""
