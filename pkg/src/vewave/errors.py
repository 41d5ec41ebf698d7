"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code; see ``vewave.cli``.
"""


class VewaveError(Exception):
    """Base class for all package errors."""


class ConfigError(VewaveError):
    """Invalid or internally inconsistent configuration (exit code 2)."""


class DataError(VewaveError):
    """Unusable input data: bad files, rate mismatches, empty inputs (exit code 3)."""


class DomainError(VewaveError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(VewaveError, ValueError):
    """Tensor shape mismatch; message names both offending shapes."""


class NumericalError(VewaveError):
    """Non-finite values or diverging iterations (exit code 4)."""


class UsageError(VewaveError):
    """API called out of order (e.g. backward before forward)."""
