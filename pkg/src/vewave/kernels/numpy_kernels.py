"""Pure-numpy kernel backend: strided-view im2col/col2im plus BLAS matmul."""

import numpy as np


def _im2col(xb: np.ndarray, kernel: int, dilation: int, l_out: int) -> np.ndarray:
    """Stack dilated taps of one batch element into a [Ci*K, l_out] matrix."""
    ci = xb.shape[0]
    cols = np.empty((ci, kernel, l_out))
    for k in range(kernel):
        off = k * dilation
        cols[:, k, :] = xb[:, off : off + l_out]
    return cols.reshape(ci * kernel, l_out)


def conv1d_forward(x, w, dilation):
    batch, ci, l_in = x.shape
    co, _, kernel = w.shape
    l_out = l_in - dilation * (kernel - 1)
    w2 = w.reshape(co, ci * kernel)
    y = np.empty((batch, co, l_out))
    for b in range(batch):
        y[b] = w2 @ _im2col(x[b], kernel, dilation, l_out)
    return y


def conv1d_backward_input(gy, w, dilation, l_in):
    batch, co, l_out = gy.shape
    _, ci, kernel = w.shape
    w2t = w.reshape(co, ci * kernel).T.copy()
    gx = np.zeros((batch, ci, l_in))
    for b in range(batch):
        cols = (w2t @ gy[b]).reshape(ci, kernel, l_out)
        for k in range(kernel):
            off = k * dilation
            gx[b, :, off : off + l_out] += cols[:, k, :]
    return gx


def conv1d_backward_weight(x, gy, dilation, kernel):
    batch, ci, l_in = x.shape
    _, co, l_out = gy.shape
    gw2 = np.zeros((co, ci * kernel))
    for b in range(batch):
        # contiguous [l_out, Ci*K] operand keeps the BLAS call (and hence the
        # exact floating-point reduction order) identical to the other backend
        cols_t = np.ascontiguousarray(_im2col(x[b], kernel, dilation, l_out).T)
        gw2 += gy[b] @ cols_t
    return gw2.reshape(co, ci, kernel)


def conv_transpose1d_forward(x, w, stride):
    batch, ci, l_in = x.shape
    _, co, kernel = w.shape
    l_out = (l_in - 1) * stride + kernel
    w2t = w.reshape(ci, co * kernel).T.copy()
    y = np.zeros((batch, co, l_out))
    span = (l_in - 1) * stride + 1
    for b in range(batch):
        taps = (w2t @ x[b]).reshape(co, kernel, l_in)
        for k in range(kernel):
            y[b, :, k : k + span : stride] += taps[:, k, :]
    return y


def conv_transpose1d_backward_input(gy, w, stride):
    batch, co, l_out = gy.shape
    ci, _, kernel = w.shape
    l_in = (l_out - kernel) // stride + 1
    w2 = w.reshape(ci, co * kernel)
    gx = np.empty((batch, ci, l_in))
    span = (l_in - 1) * stride + 1
    cols = np.empty((co, kernel, l_in))
    for b in range(batch):
        for k in range(kernel):
            cols[:, k, :] = gy[b, :, k : k + span : stride]
        gx[b] = w2 @ cols.reshape(co * kernel, l_in)
    return gx


def conv_transpose1d_backward_weight(x, gy, stride, kernel):
    batch, ci, l_in = x.shape
    _, co, l_out = gy.shape
    gw2 = np.zeros((ci, co * kernel))
    span = (l_in - 1) * stride + 1
    cols = np.empty((co, kernel, l_in))
    for b in range(batch):
        for k in range(kernel):
            cols[:, k, :] = gy[b, :, k : k + span : stride]
        # contiguous transpose for a bit-reproducible BLAS reduction order
        cols_t = np.ascontiguousarray(cols.reshape(co * kernel, l_in).T)
        gw2 += x[b] @ cols_t
    return gw2.reshape(ci, co, kernel)
