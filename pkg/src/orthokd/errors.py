"""Exception hierarchy.

The CLI maps these to exit codes: :class:`NumericError` is 2, everything
else derived from :class:`OrthoKDError` is 1.
"""


class OrthoKDError(Exception):
    """Base class for all package errors."""


class ShapeError(OrthoKDError, ValueError):
    pass


class ConfigError(OrthoKDError, ValueError):
    """Invalid configuration.  ``line`` is set when parsed from a file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKeyError(ConfigError):
    pass


class ValueParseError(ConfigError):
    pass


class InvariantError(ConfigError):
    pass


class NumericError(OrthoKDError, ArithmeticError):
    pass


class FormatError(OrthoKDError, ValueError):
    pass


class DataError(OrthoKDError, ValueError):
    pass


class PreconditionError(OrthoKDError, ValueError):
    pass
