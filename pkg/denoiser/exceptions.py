"""Error hierarchy for the particle denoiser.

None of these subclass ``ValueError``: pydantic only wraps ``ValueError`` and
``AssertionError`` raised inside validators, so domain errors raised while a
model is being built reach the caller unchanged.
"""


class DenoiserError(Exception):
    """Base exception for all denoiser errors."""

    exit_code: int = 2


class ValidationError(DenoiserError):
    """Raised when an input violates a documented invariant."""

    exit_code = 2


class ScheduleError(ValidationError):
    """Raised when the derived residual weight breaks eta = beta*sigma^2/(2*L0) < 1."""

    def __init__(self, eta: float, beta: float, sigma2: float, l0: int):
        message = (
            f"Schedule violates η=βσ²/(2L0)<1: β={beta:g}, σ²={sigma2:g}, "
            f"L0={l0} give η={eta:g}"
        )
        super().__init__(message)
        self.eta = eta


class DimensionMismatch(ValidationError):
    """Raised when vectors or particle sets of different dimensions are combined."""

    def __init__(self, expected: int, actual: int, what: str = "input"):
        super().__init__(f"Dimension mismatch for {what}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class TooFewPoints(ValidationError):
    """Raised when a statistic needs more points than were given."""


class EmptyInput(ValidationError):
    """Raised when a sample list is empty."""


class TooLarge(ValidationError):
    """Raised when an exact solver is asked for more points than it accepts."""


class EmptyAfterTruncation(DenoiserError):
    """Raised when hard truncation retains no particle. Increase R or resample."""

    exit_code = 2

    def __init__(self, radius: float, count: int):
        super().__init__(
            f"No particle among {count} lies within radius {radius:g}; "
            f"increase the radius or resample"
        )
        self.radius = radius


class SnapshotNotFound(DenoiserError):
    """Raised when a trajectory has no snapshot at the requested depth."""

    exit_code = 2

    def __init__(self, depth: int, available: list):
        super().__init__(f"No snapshot at depth {depth}; recorded depths: {available}")
        self.depth = depth


class NumericFailure(DenoiserError):
    """Raised when an integrator or root solve leaves its valid domain."""

    exit_code = 3


class SingularCovariance(NumericFailure):
    """Raised when a component covariance plus noise is not positive definite."""


class DataIOError(DenoiserError):
    """Raised when reading or writing a file fails."""

    exit_code = 4


class ParseError(DataIOError):
    """Raised when a data file is malformed."""

    def __init__(self, message: str, line: int = 0, path: str = ""):
        location = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(f"{location}{message}")
        self.line = line
        self.path = path
