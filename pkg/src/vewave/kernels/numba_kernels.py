"""Numba kernel backend: JIT-compiled packing/scatter loops around BLAS dots.

Every kernel is serial and accumulates in a fixed order, so results are
bit-reproducible run to run.  ``cache=True`` persists compiled code next to
the package to amortize JIT cost across processes.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv1d_forward(x, w, dilation):
    batch, ci, l_in = x.shape
    co, _, kernel = w.shape
    l_out = l_in - dilation * (kernel - 1)
    w2 = np.ascontiguousarray(w.reshape(co, ci * kernel))
    y = np.empty((batch, co, l_out))
    cols = np.empty((ci * kernel, l_out))
    for b in range(batch):
        for c in range(ci):
            for k in range(kernel):
                row = c * kernel + k
                off = k * dilation
                for i in range(l_out):
                    cols[row, i] = x[b, c, i + off]
        y[b] = np.dot(w2, cols)
    return y


@njit(cache=True)
def conv1d_backward_input(gy, w, dilation, l_in):
    batch, co, l_out = gy.shape
    _, ci, kernel = w.shape
    w2t = np.ascontiguousarray(w.reshape(co, ci * kernel).T)
    gx = np.zeros((batch, ci, l_in))
    for b in range(batch):
        cols = np.dot(w2t, gy[b])
        for c in range(ci):
            for k in range(kernel):
                row = c * kernel + k
                off = k * dilation
                for i in range(l_out):
                    gx[b, c, i + off] += cols[row, i]
    return gx


@njit(cache=True)
def conv1d_backward_weight(x, gy, dilation, kernel):
    batch, ci, l_in = x.shape
    _, co, l_out = gy.shape
    gw2 = np.zeros((co, ci * kernel))
    cols_t = np.empty((l_out, ci * kernel))
    for b in range(batch):
        for c in range(ci):
            for k in range(kernel):
                row = c * kernel + k
                off = k * dilation
                for i in range(l_out):
                    cols_t[i, row] = x[b, c, i + off]
        gw2 += np.dot(gy[b], cols_t)
    return gw2.reshape(co, ci, kernel)


@njit(cache=True)
def conv_transpose1d_forward(x, w, stride):
    batch, ci, l_in = x.shape
    _, co, kernel = w.shape
    l_out = (l_in - 1) * stride + kernel
    w2t = np.ascontiguousarray(w.reshape(ci, co * kernel).T)
    y = np.zeros((batch, co, l_out))
    for b in range(batch):
        taps = np.dot(w2t, x[b])
        for c in range(co):
            for k in range(kernel):
                row = c * kernel + k
                for i in range(l_in):
                    y[b, c, i * stride + k] += taps[row, i]
    return y


@njit(cache=True)
def conv_transpose1d_backward_input(gy, w, stride):
    batch, co, l_out = gy.shape
    ci, _, kernel = w.shape
    l_in = (l_out - kernel) // stride + 1
    w2 = np.ascontiguousarray(w.reshape(ci, co * kernel))
    gx = np.empty((batch, ci, l_in))
    cols = np.empty((co * kernel, l_in))
    for b in range(batch):
        for c in range(co):
            for k in range(kernel):
                row = c * kernel + k
                for i in range(l_in):
                    cols[row, i] = gy[b, c, i * stride + k]
        gx[b] = np.dot(w2, cols)
    return gx


@njit(cache=True)
def conv_transpose1d_backward_weight(x, gy, stride, kernel):
    batch, ci, l_in = x.shape
    _, co, l_out = gy.shape
    gw2 = np.zeros((ci, co * kernel))
    cols_t = np.empty((l_in, co * kernel))
    for b in range(batch):
        for c in range(co):
            for k in range(kernel):
                row = c * kernel + k
                for i in range(l_in):
                    cols_t[i, row] = gy[b, c, i * stride + k]
        gw2 += np.dot(x[b], cols_t)
    return gw2.reshape(ci, co, kernel)
