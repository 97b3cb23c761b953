"""Exception hierarchy.

Everything a user can trigger with bad data derives from :class:`PessirankError`,
which the CLI maps to exit code 2.
"""


class PessirankError(Exception):
    """Base class for data and validation errors."""


class DomainError(PessirankError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ParameterLookupError(PessirankError, KeyError):
    """An item or position has no entry in a parameter table."""

    def __str__(self):
        return Exception.__str__(self)


class SizeError(PessirankError, ValueError):
    """Not enough items to build a list of the requested length."""


class EmptyStatsError(PessirankError, ValueError):
    """An estimate was requested from zero observations."""


class LogFormatError(PessirankError, ValueError):
    """Malformed logged data, file or in-memory."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(PessirankError, ValueError):
    """Inconsistent estimator or experiment configuration."""


class ContextMismatchError(PessirankError, ValueError):
    """Ground truth and result disagree on contexts or list length."""
