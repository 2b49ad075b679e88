"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain bug and escapes as usual.
"""


class SegclassError(Exception):
    """Base class for errors raised deliberately by this package."""


class ConfigError(SegclassError):
    """Invalid configuration: unknown keys, out-of-range values, bad wiring."""


class DataError(SegclassError):
    """Invalid data: malformed files, out-of-range labels, impossible splits."""


class NumericError(SegclassError):
    """Numeric failure: non-finite values where finite ones are required."""


class ShapeError(SegclassError):
    """Tensor shape mismatch in a graph operation."""
