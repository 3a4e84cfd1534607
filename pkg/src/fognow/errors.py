"""Exception hierarchy shared across the package.

``DataError`` subclasses map to CLI exit code 1, ``ConfigError`` subclasses
to exit code 2.
"""


class FognowError(Exception):
    """Base class for all package errors."""


class DataError(FognowError):
    """Input data violates a precondition."""


class ConfigError(FognowError, ValueError):
    """A configuration value is out of range or inconsistent."""
