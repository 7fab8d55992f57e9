"""Convolution kernel selection.

The compiled core is used when it was built; otherwise the numpy fallback.
Set ``KNEEDET_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _conv_py

BACKEND = "python"
_impl = _conv_py
if os.environ.get("KNEEDET_PURE_PYTHON") != "1":
    try:
        from . import _conv_ext as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _conv_py


def conv2d_forward(x, w, b, stride: int, pad: int) -> np.ndarray:
    """Batched cross-correlation plus bias: ``x`` is (N, C, H, W), ``w`` is (F, C, K, K)."""
    return _impl.conv2d_forward(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        int(stride),
        int(pad),
    )


def conv2d_backward(x, w, g, stride: int, pad: int, need_dx: bool = True):
    """Gradients ``(dx, dw, db)`` of a conv layer given the upstream gradient ``g``.

    With ``need_dx=False`` the returned ``dx`` is all zeros.
    """
    return _impl.conv2d_backward(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
        int(stride),
        int(pad),
        bool(need_dx),
    )
