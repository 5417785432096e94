"""Exception types raised by the library."""


class StwistError(Exception):
    """Base class for all library errors."""


class ConfigurationError(StwistError, ValueError):
    """Invalid parameters, configuration file or command-line input."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DivergenceError(StwistError):
    """A state became non-finite or left the divergence box."""


class InsufficientDataError(StwistError):
    """A trajectory is too short for the requested analysis."""


class BoundInapplicableError(StwistError):
    """The gain condition needed by an analytic bound does not hold."""
