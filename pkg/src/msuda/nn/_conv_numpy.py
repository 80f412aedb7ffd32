"""Vectorized 1-d convolution kernels (valid padding, stride 1, float64).

Fallback backend used when the compiled extension is not importable. The
convolution is the cross-correlation convention: y[n,o,t] = sum_{c,k}
w[o,c,k] * x[n,c,t+k] + b[o].
"""

import numpy as np

BACKEND_NAME = "numpy"


def conv1d_forward(x, w, b):
    """x [n,ci,l], w [co,ci,k], b [co] -> y [n,co,l-k+1]."""
    k = w.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)  # [n,ci,lo,k]
    y = np.einsum("nclk,ock->nol", win, w, optimize=True)
    y += b[None, :, None]
    return y


def conv1d_backward(x, w, dy):
    """Gradients of a scalar loss through conv1d_forward.

    Returns (dx, dw, db). dx is the full correlation of dy (zero-padded by
    k-1 on both ends) with the kernel flipped along its width.
    """
    k = w.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)
    dw = np.einsum("nol,nclk->ock", dy, win, optimize=True)
    db = dy.sum(axis=(0, 2))
    dy_pad = np.pad(dy, ((0, 0), (0, 0), (k - 1, k - 1)))
    dwin = np.lib.stride_tricks.sliding_window_view(dy_pad, k, axis=2)  # [n,co,l,k]
    dx = np.einsum("nolk,ock->ncl", dwin, w[:, :, ::-1], optimize=True)
    return dx, dw, db
