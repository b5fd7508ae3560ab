"""Exception types shared across the package."""


class ManifoldError(ValueError):
    """Invalid point, tangent vector or geometry operation."""


class BasePointMismatchError(ManifoldError):
    """Two tangent vectors (or a tangent and a point) do not share a base point."""


class NotPositiveDefiniteError(ManifoldError):
    """A matrix that must be SPD has a non-positive eigenvalue."""


class NonFiniteError(ManifoldError, FloatingPointError):
    """NaN or infinity in an input or an iterate."""


class UnsupportedOperationError(ManifoldError, NotImplementedError):
    """The geometry does not define this operation (e.g. log map on the simplex)."""


class SolverError(RuntimeError):
    """A solver run aborted; ``trace`` holds the records collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
