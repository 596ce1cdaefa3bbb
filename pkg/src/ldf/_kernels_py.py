"""NumPy reference kernels.

Same contract as the compiled ``_ckernels`` module; used when the extension
is not built or ``LDF_KERNELS=python`` is set.
"""

import numpy as np


def conv1d_same_forward(x, filters, bias):
    """x (B, L, Din), filters (w, Din, Dout), bias (Dout,) -> (B, L, Dout)."""
    w = filters.shape[0]
    half = w // 2
    length = x.shape[1]
    xp = np.pad(x, ((0, 0), (half, half), (0, 0)))
    out = np.empty(x.shape[:2] + (filters.shape[2],))
    out[...] = bias
    for j in range(w):
        out += xp[:, j:j + length, :] @ filters[j]
    return out


def conv1d_same_backward(grad, x, filters):
    """Returns (grad_x, grad_filters, grad_bias) for conv1d_same_forward."""
    w, d_in, d_out = filters.shape
    half = w // 2
    length = x.shape[1]
    xp = np.pad(x, ((0, 0), (half, half), (0, 0)))
    g2 = grad.reshape(-1, d_out)
    gxp = np.zeros(xp.shape)
    gw = np.empty(filters.shape)
    for j in range(w):
        gw[j] = xp[:, j:j + length, :].reshape(-1, d_in).T @ g2
        gxp[:, j:j + length, :] += grad @ filters[j].T
    gb = g2.sum(axis=0)
    return gxp[:, half:half + length, :], gw, gb


def masked_softmax_forward(x, mask):
    """Row-wise softmax of a 2-D array; masked-out entries are exactly 0.

    ``mask`` is boolean, True for live entries. Every row needs at least one
    live entry (checked by the caller).
    """
    z = np.where(mask, x, -np.inf)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_backward(y, gy):
    return y * (gy - (gy * y).sum(axis=1, keepdims=True))
