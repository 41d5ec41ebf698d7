"""Define-by-run reverse-mode differentiation on float64 numpy arrays.

A forward pass builds a graph of ``Tensor`` nodes, each holding a closure
that maps the output gradient to parent gradients; ``backward`` walks the
graph in reverse topological order and then drops the tape.  Only the op set
the score network needs is implemented.  Convolutions route through
``vewave.kernels`` so the backend flag applies to forward and backward alike.

Gradients are only recorded for tensors reachable from a leaf created with
``requires_grad=True`` and while grads are globally enabled (see ``no_grad``).
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError, UsageError

_GRAD_ENABLED = True
_CHECK_FINITE = os.environ.get("VEWAVE_CHECK_FINITE", "") == "1"


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (sampling / evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_finite_checks(enabled: bool):
    """Validate every op output for NaN/Inf (slow; meant for tests/debugging)."""
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


def _as_data(value) -> np.ndarray:
    if isinstance(value, Tensor):
        raise TypeError("expected raw array, got Tensor")
    return np.asarray(value, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_data(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- construction of graph nodes ---------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents, backward_fn, op_name: str) -> "Tensor":
        if _CHECK_FINITE and not np.all(np.isfinite(data)):
            raise NumericalError(f"non-finite values in output of {op_name}")
        out = Tensor(data)
        tracked = tuple(p for p in parents if p.requires_grad)
        if _GRAD_ENABLED and tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backward = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- backward -----------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into all reachable leaves."""
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar, got shape {self.data.shape}")
        if not self.requires_grad:
            raise UsageError("backward called on a tensor with no recorded graph")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                # drop the tape so intermediate buffers free eagerly
                node._backward = None
                node._parents = ()
                node.grad = None

    def _accumulate(self, g: np.ndarray):
        # accumulation allocates fresh arrays, so sharing g between parents is safe
        self.grad = g if self.grad is None else self.grad + g

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise TypeError("tensor division only supports scalars")

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def abs(self):
        return absolute(self)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def narrow(self, axis: int, start: int, length: int):
        return narrow(self, axis, start, length)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


# -- elementwise ops ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._node(out_data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._node(out_data, (a, b), backward, "mul")


def scale(a, c: float) -> Tensor:
    a = _wrap(a)

    def backward(g):
        a._accumulate(g * c)

    return Tensor._node(a.data * c, (a,), backward, "scale")


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return Tensor._node(y, (a,), backward, "tanh")


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # exp may overflow to inf for very negative inputs; 1/(1+inf) saturates
    # to exactly 0.0, so silence the warning rather than branch.
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return Tensor._node(y, (a,), backward, "sigmoid")


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0.0

    def backward(g):
        a._accumulate(g * mask)

    return Tensor._node(a.data * mask, (a,), backward, "relu")


def leaky_relu(a, alpha: float = 0.4) -> Tensor:
    a = _wrap(a)
    pos = a.data > 0.0
    slope = np.where(pos, 1.0, alpha)

    def backward(g):
        a._accumulate(g * slope)

    return Tensor._node(a.data * slope, (a,), backward, "leaky_relu")


def silu(a) -> Tensor:
    """x * sigmoid(x), composed from primitive ops."""
    a = _wrap(a)
    return mul(a, sigmoid(a))


def absolute(a) -> Tensor:
    a = _wrap(a)
    sign = np.sign(a.data)

    def backward(g):
        a._accumulate(g * sign)

    return Tensor._node(np.abs(a.data), (a,), backward, "abs")


# -- shape ops ----------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old_shape = a.data.shape

    def backward(g):
        a._accumulate(g.reshape(old_shape))

    return Tensor._node(a.data.reshape(shape), (a,), backward, "reshape")


def transpose2d(a) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d expects a matrix, got shape {a.data.shape}")

    def backward(g):
        a._accumulate(np.ascontiguousarray(g.T))

    return Tensor._node(np.ascontiguousarray(a.data.T), (a,), backward, "transpose2d")


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = _wrap(a)
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} "
            f"of shape {a.data.shape}"
        )
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        a._accumulate(full)

    return Tensor._node(np.ascontiguousarray(a.data[index]), (a,), backward, "narrow")


def pad1d(a, left: int, right: int) -> Tensor:
    """Zero-pad the trailing axis."""
    a = _wrap(a)
    if left == 0 and right == 0:
        return a
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    n = a.data.shape[-1]

    def backward(g):
        a._accumulate(g[..., left : left + n])

    return Tensor._node(np.pad(a.data, width), (a,), backward, "pad1d")


def concat_channels(parts) -> Tensor:
    """Concatenate [B, C_i, L] tensors along the channel axis."""
    parts = [_wrap(p) for p in parts]
    sizes = [p.data.shape[1] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        off = 0
        for p, c in zip(parts, sizes):
            if p.requires_grad:
                p._accumulate(g[:, off : off + c])
            off += c

    return Tensor._node(out_data, tuple(parts), backward, "concat_channels")


# -- reductions ----------------------------------------------------------------


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.data.shape

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, in_shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % len(in_shape) for ax in axes)
            expand = list(g.shape)
            for ax in sorted(axes):
                expand.insert(ax, 1)
            g = g.reshape(expand)
        a._accumulate(np.broadcast_to(g, in_shape).copy())

    return Tensor._node(out_data, (a,), backward, "sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- linear algebra -------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul expects matrices, got shapes {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor._node(out_data, (a, b), backward, "matmul")


# -- convolutions ---------------------------------------------------------------


def conv1d(x, w, dilation: int = 1, padding: int = 0) -> Tensor:
    """Dilated cross-correlation of x[B, Ci, L] with w[Co, Ci, K].

    Output length is L + 2*padding - dilation*(K-1); with K odd and
    padding = dilation*(K-1)//2 the length is preserved ("same" mode).
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(
            f"conv1d expects x[B,Ci,L], w[Co,Ci,K]; got {x.data.shape} and {w.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"conv1d channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    kernel = w.data.shape[2]
    l_pad = x.data.shape[2] + 2 * padding
    l_out = l_pad - dilation * (kernel - 1)
    if l_out < 1:
        raise ShapeError(
            f"kernel span {dilation * (kernel - 1) + 1} exceeds padded input "
            f"length {l_pad} (input {x.data.shape}, weight {w.data.shape})"
        )
    xp = x if padding == 0 else pad1d(x, padding, padding)
    x_data = xp.data

    out_data = kernels.conv1d_forward(x_data, w.data, dilation)

    def backward(g):
        g = np.ascontiguousarray(g)
        if xp.requires_grad:
            xp._accumulate(
                kernels.conv1d_backward_input(g, w.data, dilation, x_data.shape[2])
            )
        if w.requires_grad:
            w._accumulate(kernels.conv1d_backward_weight(x_data, g, dilation, kernel))

    return Tensor._node(out_data, (xp, w), backward, "conv1d")


def conv_transpose1d(x, w, stride: int = 1) -> Tensor:
    """Transposed convolution of x[B, Ci, L] with w[Ci, Co, K].

    Output length is (L-1)*stride + K; the map is the adjoint of the
    corresponding stride-s convolution.
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(
            f"conv_transpose1d expects x[B,Ci,L], w[Ci,Co,K]; got {x.data.shape} "
            f"and {w.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"conv_transpose1d channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    kernel = w.data.shape[2]

    out_data = kernels.conv_transpose1d_forward(x.data, w.data, stride)
    x_data = x.data

    def backward(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x._accumulate(kernels.conv_transpose1d_backward_input(g, w.data, stride))
        if w.requires_grad:
            w._accumulate(
                kernels.conv_transpose1d_backward_weight(x_data, g, stride, kernel)
            )

    return Tensor._node(out_data, (x, w), backward, "conv_transpose1d")
