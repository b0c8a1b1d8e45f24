"""Exception types shared across the package.

CLI exit codes map onto these: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4. Plain ValueError is used for bad arguments to
library functions.
"""


class ConfigError(Exception):
    """Invalid configuration: unknown key, bad value, inconsistent settings."""


class DataError(Exception):
    """Corrupt, truncated, or wrong-format data file."""


class DivergenceError(Exception):
    """A sampler or training run produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ObjectAbsentError(DataError):
    """No scene object matches the requested label set."""
