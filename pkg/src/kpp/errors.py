"""Exception types shared across the toolkit."""


class KppError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(KppError):
    """A vector, matrix, or configuration has the wrong length or shape."""


class DomainError(KppError):
    """A value is outside its permitted domain (e.g. a spin that is not +-1)."""


class ParseError(KppError):
    """A text input could not be parsed.

    Carries the 1-based line number when the failure is tied to a line.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyProblemError(KppError):
    """The problem has zero variables."""


class SizeLimitError(KppError):
    """An exact (exhaustive) operation was requested above its size cap."""


class EmptySampleError(KppError):
    """A SampleSet with no entries was passed where samples are required."""


class EmptyBatchError(KppError):
    """A batch operation received no data."""


class ConfigError(KppError):
    """Invalid or inconsistent configuration."""


class DivergenceError(KppError):
    """Training produced a non-finite parameter."""


class EncodingError(KppError):
    """A sequence could not be encoded to spins (e.g. token id overflow)."""


class KinkError(KppError):
    """Derivative requested exactly at the non-differentiable kink."""


class NetworkError(KppError):
    """Transport-level failure talking to the remote sampling service."""


class AuthError(KppError):
    """The remote service rejected the credentials."""


class RemoteJobError(KppError):
    """The remote service reported a failed job."""
