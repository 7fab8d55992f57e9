# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled direct-loop convolution kernels.

Every output element accumulates its products in (input channel, kernel
row, kernel column) order, starting from zero, with the bias added last.
The numpy fallback follows the same order, so both paths agree bitwise.
Internally the loops run channels-last so the innermost loop is a
contiguous axpy over filters (or input channels).
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void axpy(Py_ssize_t n, double a, const double *x, double *y) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        y[i] = y[i] + a * x[i]


def conv2d_forward(x_in, w_in, b_in, int stride, int pad):
    cdef Py_ssize_t N = x_in.shape[0], C = x_in.shape[1], H = x_in.shape[2], W = x_in.shape[3]
    cdef Py_ssize_t F = w_in.shape[0], K = w_in.shape[2]
    cdef Py_ssize_t OH = (H + 2 * pad - K) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * pad - K) // stride + 1
    cdef const double[:, :, :, ::1] x = np.ascontiguousarray(np.transpose(x_in, (0, 2, 3, 1)))
    cdef const double[:, :, :, ::1] w = np.ascontiguousarray(np.transpose(w_in, (1, 2, 3, 0)))
    cdef const double[::1] b = b_in
    out_arr = np.zeros((N, OH, OW, F), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, f, c, ky, kx, oy, ox, iy, ix
    cdef double *o
    with nogil:
        for n in range(N):
            for oy in range(OH):
                for ox in range(OW):
                    o = &out[n, oy, ox, 0]
                    for c in range(C):
                        for ky in range(K):
                            iy = oy * stride + ky - pad
                            if iy < 0 or iy >= H:
                                continue
                            for kx in range(K):
                                ix = ox * stride + kx - pad
                                if ix < 0 or ix >= W:
                                    continue
                                axpy(F, x[n, iy, ix, c], &w[c, ky, kx, 0], o)
                    for f in range(F):
                        o[f] = o[f] + b[f]
    return np.ascontiguousarray(out_arr.transpose(0, 3, 1, 2))


def conv2d_backward(x_in, w_in, g_in, int stride, int pad, bint need_dx=True):
    """Return ``(dx, dw, db)`` for upstream gradient ``g`` of shape (N, F, OH, OW)."""
    cdef Py_ssize_t N = x_in.shape[0], C = x_in.shape[1], H = x_in.shape[2], W = x_in.shape[3]
    cdef Py_ssize_t F = w_in.shape[0], K = w_in.shape[2]
    cdef Py_ssize_t OH = g_in.shape[2], OW = g_in.shape[3]
    cdef const double[:, :, :, ::1] x = np.ascontiguousarray(np.transpose(x_in, (0, 2, 3, 1)))
    cdef const double[:, :, :, ::1] g = np.ascontiguousarray(np.transpose(g_in, (0, 2, 3, 1)))
    # (ky, kx, f, c) so the dx update is contiguous over c
    cdef const double[:, :, :, ::1] wt = np.ascontiguousarray(np.transpose(w_in, (2, 3, 0, 1)))
    dx_arr = np.zeros((N, H, W, C), dtype=np.float64)
    dw_arr = np.zeros((K, K, C, F), dtype=np.float64)
    db_arr = np.zeros(F, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t n, f, c, ky, kx, oy, ox, iy, ix
    cdef const double *gv
    cdef const double *xv
    cdef double *dxv
    with nogil:
        for n in range(N):
            for oy in range(OH):
                for ox in range(OW):
                    gv = &g[n, oy, ox, 0]
                    axpy(F, 1.0, gv, &db[0])
                    for ky in range(K):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= H:
                            continue
                        for kx in range(K):
                            ix = ox * stride + kx - pad
                            if ix < 0 or ix >= W:
                                continue
                            xv = &x[n, iy, ix, 0]
                            dxv = &dx[n, iy, ix, 0]
                            for c in range(C):
                                axpy(F, xv[c], gv, &dw[ky, kx, c, 0])
                            if need_dx:
                                for f in range(F):
                                    axpy(C, gv[f], &wt[ky, kx, f, 0], dxv)
    return (
        np.ascontiguousarray(dx_arr.transpose(0, 3, 1, 2)),
        np.ascontiguousarray(dw_arr.transpose(3, 2, 0, 1)),
        db_arr,
    )
