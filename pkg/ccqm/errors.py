class CCQMError(Exception):
    """Base class for every error raised by ccqm."""


class ConfigurationError(CCQMError, ValueError):
    """Malformed word, vertex, schedule, generator file or experiment config."""


class DomainError(CCQMError, ValueError):
    """A mathematical precondition does not hold for the given input."""


class InconclusiveError(CCQMError):
    """The computation could neither prove nor refute its claim."""


class UnreachableError(CCQMError):
    """The target cannot be reached inside the current truncation, raise N."""


class OutsideTruncationError(UnreachableError):
    """A vertex does not belong to the current truncation, raise N."""


class ConstructionError(CCQMError):
    """A family member or axis segment could not be built."""


class CertificationError(CCQMError):
    """No power up to the configured maximum produced a certificate."""
