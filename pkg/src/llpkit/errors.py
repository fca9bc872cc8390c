"""Exception types shared across the package."""


class LlpError(Exception):
    """Base class for all errors raised by llpkit."""


class UsageError(LlpError):
    """The caller violated a documented precondition."""


class FormatError(UsageError):
    """A data file does not match its documented layout."""


class CapacityError(LlpError):
    """An exhaustive enumeration was requested for a bag too large to list."""


class NumericalError(LlpError):
    """A computation produced a non-finite quantity."""
