"""Numpy fallback for the convolution kernels.

Mirrors the accumulation order of the compiled core: per output element,
products are added in (input channel, kernel row, kernel column) order and
the bias is added last.
"""
from __future__ import annotations

import numpy as np


def _valid(o: int, k: int, pad: int, stride: int, size: int) -> tuple[int, int]:
    # output index range [lo, hi) whose input index o*stride + k - pad is in bounds
    lo = 0
    while lo < o and lo * stride + k - pad < 0:
        lo += 1
    hi = o
    while hi > lo and (hi - 1) * stride + k - pad >= size:
        hi -= 1
    return lo, hi


# non-finite values propagate silently like in the compiled core; the engine reports them
@np.errstate(over="ignore", invalid="ignore")
def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, c_in, h, wd = x.shape
    f, _, k, _ = w.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for c in range(c_in):
        for ky in range(k):
            y0, y1 = _valid(oh, ky, pad, stride, h)
            if y0 >= y1:
                continue
            iy0 = y0 * stride + ky - pad
            iy1 = (y1 - 1) * stride + ky - pad + 1
            for kx in range(k):
                x0, x1 = _valid(ow, kx, pad, stride, wd)
                if x0 >= x1:
                    continue
                ix0 = x0 * stride + kx - pad
                ix1 = (x1 - 1) * stride + kx - pad + 1
                patch = x[:, c, iy0:iy1:stride, ix0:ix1:stride]
                out[:, :, y0:y1, x0:x1] += w[None, :, c, ky, kx, None, None] * patch[:, None]
    out += b[None, :, None, None]
    return out


@np.errstate(over="ignore", invalid="ignore")
def conv2d_backward(x: np.ndarray, w: np.ndarray, g: np.ndarray, stride: int, pad: int, need_dx: bool = True):
    n, c_in, h, wd = x.shape
    f, _, k, _ = w.shape
    oh, ow = g.shape[2], g.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = g.sum(axis=(0, 2, 3))
    for c in range(c_in):
        for ky in range(k):
            y0, y1 = _valid(oh, ky, pad, stride, h)
            if y0 >= y1:
                continue
            iy0 = y0 * stride + ky - pad
            iy1 = (y1 - 1) * stride + ky - pad + 1
            for kx in range(k):
                x0, x1 = _valid(ow, kx, pad, stride, wd)
                if x0 >= x1:
                    continue
                ix0 = x0 * stride + kx - pad
                ix1 = (x1 - 1) * stride + kx - pad + 1
                gs = g[:, :, y0:y1, x0:x1]
                patch = x[:, c, iy0:iy1:stride, ix0:ix1:stride]
                dw[:, c, ky, kx] = np.einsum("nfhw,nhw->f", gs, patch)
                if need_dx:
                    dx[:, c, iy0:iy1:stride, ix0:ix1:stride] += np.einsum("f,nfhw->nhw", w[:, c, ky, kx], gs)
    return dx, dw, db
