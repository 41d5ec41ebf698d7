"""vewave: a mel-conditioned diffusion vocoder built on a variance-exploding
SDE, with its own f64 autodiff substrate and numba-accelerated conv kernels.
"""

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    NumericalError,
    ShapeError,
    UsageError,
    VewaveError,
)
from .sde import LinearSde, SdeSpec, TransitionMoments, VeSde

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "NumericalError",
    "ShapeError",
    "UsageError",
    "VewaveError",
    "LinearSde",
    "SdeSpec",
    "TransitionMoments",
    "VeSde",
    "__version__",
]
