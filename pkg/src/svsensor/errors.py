"""Exception types shared across the package.

The CLI maps these onto its exit codes: configuration problems exit 2,
data/shape problems exit 3, numerical failures exit 4.
"""


class ConfigError(ValueError):
    """Invalid sensor or plan configuration (bad gain bounds, bad parameters)."""


class DataError(ValueError):
    """Unusable input data: unreadable files, NaNs, missing gain levels."""


class ShapeError(DataError):
    """Array dimensions do not conform (map/scene grid mismatch, indivisible tiles)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (degenerate fit, solver breakdown)."""
