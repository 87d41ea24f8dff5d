"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific type that applies and reserve plain ``ValueError`` for
violated call contracts (bad shapes, out-of-range arguments).
"""


class FormatError(ValueError):
    """A file or byte stream does not conform to its declared format."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class NumericError(ArithmeticError):
    """A numeric computation produced NaN or infinity where it must not."""
