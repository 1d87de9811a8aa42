"""Exception types shared across the package."""


class LevellineError(Exception):
    """Base class for all package errors."""


class InvalidSizeError(LevellineError, ValueError):
    """Domain generator asked for an unsupported size."""


class DomainError(LevellineError, ValueError):
    """A point or vertex is outside the region where an operation is defined."""


class TieError(LevellineError, ValueError):
    """A field value is exactly zero where a sign decision is required.

    Callers should resample (measure-zero event for Gaussian fields) rather
    than expect silent perturbation.
    """


class PreconditionError(LevellineError, ValueError):
    """Input violates a documented precondition (e.g. inconsistent arc signs)."""


class SupportError(LevellineError, ValueError):
    """Support of a test function leaves the admissible region."""


class SwallowedError(LevellineError, RuntimeError):
    """Loewner flow of a point reached the singularity before the target time."""

    def __init__(self, time, point=None):
        self.time = float(time)
        self.point = point
        msg = f"point swallowed at time {self.time:.6g}"
        if point is not None:
            msg += f" (point {point})"
        super().__init__(msg)


class InvalidPathError(LevellineError, ValueError):
    """A half-plane path fails a structural requirement (self-crossing, hull collapse)."""


class GridMismatchError(LevellineError, ValueError):
    """Two sampled paths do not share a common time grid; resample first."""


class NumericalError(LevellineError, RuntimeError):
    """A solve or factorization did not reach the required accuracy."""


class UndersampledError(LevellineError, RuntimeError):
    """A statistical test has too few samples in some stratum to be meaningful."""
