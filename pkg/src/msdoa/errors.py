"""Exception types shared across the package."""


class MsdoaError(Exception):
    """Base class for all library errors."""


class ValidationError(MsdoaError, ValueError):
    """An input value violates a documented precondition."""


class ConfigurationError(ValidationError):
    """A parameter combination is internally inconsistent."""


class DegenerateCodingError(MsdoaError):
    """The harmonic mixing matrix is numerically rank deficient."""


class NearSingularWhitenerError(MsdoaError):
    """The smoothing whitener cannot be factorized reliably."""


class NoNoiseSubspaceError(MsdoaError):
    """The requested source count leaves no noise subspace."""


class UnidentifiableParameterError(MsdoaError):
    """Fisher information for the requested angles is singular."""
