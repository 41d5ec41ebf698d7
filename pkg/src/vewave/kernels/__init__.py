"""Hot convolution kernels with two interchangeable backends.

The numba backend JIT-compiles the im2col/col2im packing loops; the numpy
backend uses strided-view slicing.  Both funnel the arithmetic through BLAS
matmuls and produce identical results for the same float64 inputs, so the
choice only affects speed.  Select with the environment variable

    VEWAVE_BACKEND=numba   (default when numba imports)
    VEWAVE_BACKEND=numpy   (pure-numpy fallback)

``benchmarks/bench_kernels.py`` compares the two.

Array conventions (all float64, C-contiguous):
    conv1d           x[B, Ci, L],  w[Co, Ci, K], dilation d >= 1  ->  y[B, Co, L - d*(K-1)]
    conv_transpose1d x[B, Ci, L],  w[Ci, Co, K], stride s >= 1    ->  y[B, Co, (L-1)*s + K]

Kernels are "valid"-mode; padding and trimming live in the autodiff layer.
"""

import os

import numpy as np

from . import numpy_kernels as _numpy_impl

__all__ = [
    "backend_name",
    "available_backends",
    "get_impl",
    "conv1d_forward",
    "conv1d_backward_input",
    "conv1d_backward_weight",
    "conv_transpose1d_forward",
    "conv_transpose1d_backward_input",
    "conv_transpose1d_backward_weight",
]


def _select_backend() -> str:
    requested = os.environ.get("VEWAVE_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"VEWAVE_BACKEND must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        from . import numba_kernels  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


_BACKEND = _select_backend()

if _BACKEND == "numba":
    from . import numba_kernels as _impl
else:
    _impl = _numpy_impl


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _BACKEND


def available_backends() -> list:
    names = ["numpy"]
    try:
        from . import numba_kernels  # noqa: F401

        names.insert(0, "numba")
    except ImportError:
        pass
    return names


def get_impl(name: str):
    """Return the kernel module for an explicit backend name (benchmarks/tests)."""
    if name == "numpy":
        return _numpy_impl
    if name == "numba":
        from . import numba_kernels

        return numba_kernels
    raise ValueError(f"unknown backend {name!r}")


def _c64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x, w, dilation: int):
    return _impl.conv1d_forward(_c64(x), _c64(w), dilation)


def conv1d_backward_input(gy, w, dilation: int, l_in: int):
    return _impl.conv1d_backward_input(_c64(gy), _c64(w), dilation, l_in)


def conv1d_backward_weight(x, gy, dilation: int, kernel: int):
    return _impl.conv1d_backward_weight(_c64(x), _c64(gy), dilation, kernel)


def conv_transpose1d_forward(x, w, stride: int):
    return _impl.conv_transpose1d_forward(_c64(x), _c64(w), stride)


def conv_transpose1d_backward_input(gy, w, stride: int):
    return _impl.conv_transpose1d_backward_input(_c64(gy), _c64(w), stride)


def conv_transpose1d_backward_weight(x, gy, stride: int, kernel: int):
    return _impl.conv_transpose1d_backward_weight(_c64(x), _c64(gy), stride, kernel)
