"""Exception hierarchy shared by all msdlab modules."""


class MsdlabError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(MsdlabError):
    """File does not carry the expected magic/header."""


class CorruptFile(MsdlabError):
    """Header fields are invalid or the payload is truncated."""


class IoError(MsdlabError):
    """Underlying read/write operation failed."""


class ValidationError(MsdlabError):
    """Input violates a documented precondition."""


class DegenerateInput(MsdlabError):
    """Stack carries no usable signal (constant frames or amplitude floor everywhere)."""


class UnsupportedGeometry(MsdlabError):
    """Frame geometry outside what the ring construction supports."""


class NotPositiveDefinite(MsdlabError):
    """Toeplitz covariance is not positive definite."""


class NumericalError(MsdlabError):
    """A numerical routine failed beyond recoverable jitter."""


class ConfigError(MsdlabError):
    """Run configuration is incomplete or inconsistent."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
