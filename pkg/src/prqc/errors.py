"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """Requested problem size exceeds a configured resource limit."""


class NotMarkovError(ValueError):
    """Gate ensemble has non-vanishing cross terms, so no averaged rotation exists."""


class LumpingError(ValueError):
    """A 4x4 averaged rotation does not treat the x and y labels symmetrically."""


class ConvergenceError(RuntimeError):
    """An iterative estimate did not converge.

    The last estimate is kept on ``last_estimate`` so callers can still report it.
    """

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DriftError(RuntimeError):
    """Total probability of an evolved distribution drifted away from one."""
