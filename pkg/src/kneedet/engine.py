"""Deterministic CPU forward pass.

Tensors are float64 numpy arrays shaped ``(channels, height, width)``.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericFaultError, ShapeError
from .model import LayerSpec, Model

LEAKY_SLOPE = 0.1


def leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def activate(x: np.ndarray, activation: str) -> np.ndarray:
    return leaky(x) if activation == "leaky" else x


def conv2d(x: np.ndarray, layer: LayerSpec, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    if x.ndim != 3 or weights.ndim != 4 or x.shape[0] != weights.shape[1]:
        raise ShapeError(f"input {x.shape} does not fit kernel {weights.shape}")
    if weights.shape[2] != layer.size or weights.shape[0] != layer.filters:
        raise ShapeError(f"kernel {weights.shape} does not match layer (filters={layer.filters}, size={layer.size})")
    out = kernels.conv2d_forward(x[None], weights, biases, layer.stride, layer.padding)[0]
    return activate(out, layer.activation)


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    if factor < 1:
        raise InvalidInputError(f"upsample factor must be >= 1, got {factor}")
    return x.repeat(factor, axis=-2).repeat(factor, axis=-1)


def shortcut_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"shortcut shapes differ: {a.shape} vs {b.shape}")
    return a + b


def route_concat(inputs: list[np.ndarray]) -> np.ndarray:
    if not inputs:
        raise ShapeError("route needs at least one input")
    if len({t.shape[-2:] for t in inputs}) != 1:
        raise ShapeError(f"route inputs differ in spatial size: {[t.shape for t in inputs]}")
    return np.concatenate(inputs, axis=-3)


def forward(model: Model, x: np.ndarray) -> list[np.ndarray]:
    """Run the network and return one raw head tensor per yolo layer, in cfg order."""
    cfg = model.config
    expected = (cfg.channels, cfg.height, cfg.width)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != expected:
        raise ShapeError(f"input shape {x.shape} differs from network input {expected}")
    outputs: list[np.ndarray] = []
    heads = []
    cur = x
    for i, l in enumerate(cfg.layers):
        if l.kind == "convolutional":
            w, b = model.fused(i)
            cur = conv2d(cur, l, w, b)
        elif l.kind == "shortcut":
            cur = activate(shortcut_add(cur, outputs[cfg.resolve(i, l.from_index)]), l.activation)
        elif l.kind == "route":
            cur = route_concat([outputs[cfg.resolve(i, r)] for r in l.layers])
        elif l.kind == "upsample":
            cur = upsample_nearest(cur, l.stride)
        elif l.kind == "yolo":
            heads.append(cur)
        if not np.all(np.isfinite(cur)):
            raise NumericFaultError(f"non-finite activation at layer {i} ({l.kind})")
        outputs.append(cur)
    return heads
