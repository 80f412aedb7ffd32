# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 1-d convolution kernels (valid padding, stride 1, float64).

Same contract as msuda.nn._conv_numpy, different strategy: compiled loops
pack the input into an im2col matrix so each pass is one dense matrix
product. Loop orders and the reduction layout are fixed, so results are
bitwise reproducible run to run.
"""

import numpy as np

BACKEND_NAME = "compiled"


cdef void _im2col(const double[:, :, ::1] x, double[:, ::1] col,
                  Py_ssize_t k, Py_ssize_t lo) noexcept nogil:
    # col[(c*k + j), (i*lo + t)] = x[i, c, t + j]
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1]
    cdef Py_ssize_t i, c, t, j
    for c in range(ci):
        for j in range(k):
            for i in range(n):
                for t in range(lo):
                    col[c * k + j, i * lo + t] = x[i, c, t + j]


cdef void _col2im(const double[:, ::1] col, double[:, :, ::1] dx,
                  Py_ssize_t k, Py_ssize_t lo) noexcept nogil:
    # dx[i, c, t + j] += col[(c*k + j), (i*lo + t)]
    cdef Py_ssize_t n = dx.shape[0], ci = dx.shape[1]
    cdef Py_ssize_t i, c, t, j
    for c in range(ci):
        for j in range(k):
            for i in range(n):
                for t in range(lo):
                    dx[i, c, t + j] += col[c * k + j, i * lo + t]


def conv1d_forward(x, w, b):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], l = x.shape[2]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t lo = l - k + 1
    col_arr = np.empty((ci * k, n * lo), dtype=np.float64)
    cdef double[:, ::1] col = col_arr
    cdef const double[:, :, ::1] xv = x
    _im2col(xv, col, k, lo)
    # (co, ci*k) @ (ci*k, n*lo) -> (co, n*lo)
    y = w.reshape(co, ci * k) @ col_arr
    y += b[:, None]
    return np.ascontiguousarray(y.reshape(co, n, lo).transpose(1, 0, 2))


def conv1d_backward(x, w, dy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], l = x.shape[2]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t lo = l - k + 1
    col_arr = np.empty((ci * k, n * lo), dtype=np.float64)
    cdef double[:, ::1] col = col_arr
    cdef const double[:, :, ::1] xv = x
    _im2col(xv, col, k, lo)
    dy_mat = np.ascontiguousarray(dy.transpose(1, 0, 2)).reshape(co, n * lo)
    dw = (dy_mat @ col_arr.T).reshape(co, ci, k)
    db = dy_mat.sum(axis=1)
    # scatter (ci*k, n*lo) = w^T @ dy back onto the input grid
    dcol_arr = np.ascontiguousarray(w.reshape(co, ci * k).T @ dy_mat)
    cdef double[:, ::1] dcol = dcol_arr
    dx_arr = np.zeros((n, ci, l), dtype=np.float64)
    cdef double[:, :, ::1] dxv = dx_arr
    _col2im(dcol, dxv, k, lo)
    return dx_arr, dw, db
