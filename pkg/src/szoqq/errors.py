"""Exception hierarchy shared by all modules."""


class SZOQQError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(SZOQQError, ValueError):
    """An argument breaks an operation's precondition."""


class OracleError(SZOQQError):
    """The black-box oracle returned something unusable (e.g. NaN)."""


class InfeasibleStartError(ContractViolation):
    """The supplied starting point is not strictly feasible."""


class InfeasibleAnchorError(SZOQQError):
    """A queried constraint value at the current anchor is non-negative.

    This is the signal that the smoothness constants underestimate the true
    ones: the previous local set was not contained in the feasible region.
    """

    def __init__(self, message, constraint=None, value=None, point=None):
        super().__init__(message)
        self.constraint = constraint
        self.value = value
        self.point = point


class NumericalFailure(SZOQQError):
    """Non-finite intermediate values inside an iterative solver."""


class ConvergenceFailure(SZOQQError):
    """Iteration limit exhausted; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BenchmarkUnavailable(SZOQQError):
    """A built-in benchmark could not be instantiated."""
