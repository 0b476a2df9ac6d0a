"""Exception hierarchy shared across the package."""


class GthError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GthError, ValueError):
    pass


class InputError(GthError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class NumericError(GthError, ArithmeticError):
    pass


class FormatError(GthError, ValueError):
    """Bad magic, truncated payload or unparsable file contents."""


class ConfigError(GthError, ValueError):
    pass


class SeedError(GthError, RuntimeError):
    """Random generation could not satisfy its constraints for this seed."""
