"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain bug.
"""


class FastTreesError(Exception):
    pass


class DimensionError(FastTreesError, ValueError):
    """Shapes disagree with an operation's contract."""


class ConfigError(FastTreesError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(FastTreesError, ValueError):
    """Malformed or out-of-range input data."""


class UsageError(FastTreesError, RuntimeError):
    """An API called in a way its contract forbids."""


class NumericError(FastTreesError, ArithmeticError):
    """NaN/Inf surfaced where only finite values are allowed."""
