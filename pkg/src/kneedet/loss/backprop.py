"""Batched forward/backward over a cfg graph for the toy trainer.

Supports conv (without batchnorm), leaky, shortcut, route, upsample and yolo
pass-through layers. Parameters are a dict ``layer -> (weights, biases)``.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..engine import LEAKY_SLOPE, activate
from ..errors import NumericFaultError, ShapeError
from ..model import NetworkConfig


def leaky_backward(pre: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.where(pre > 0, g, LEAKY_SLOPE * g)


def activation_backward(pre: np.ndarray, g: np.ndarray, activation: str) -> np.ndarray:
    return leaky_backward(pre, g) if activation == "leaky" else g


def conv_backward(x: np.ndarray, w: np.ndarray, g: np.ndarray, stride: int, pad: int, need_dx: bool = True):
    return kernels.conv2d_backward(x, w, g, stride, pad, need_dx)


def upsample_backward(g: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = g.shape
    return g.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def concat_backward(g: np.ndarray, channels: list[int]) -> list[np.ndarray]:
    return np.split(g, np.cumsum(channels)[:-1], axis=1)


def forward_train(cfg: NetworkConfig, params: dict, x: np.ndarray):
    """Return ``(heads, cache)`` for a batch ``x`` of shape (N, C, H, W)."""
    if x.shape[1:] != (cfg.channels, cfg.height, cfg.width):
        raise ShapeError(f"batch shape {x.shape} does not match network input")
    outputs: list[np.ndarray] = []
    pre_acts: dict[int, np.ndarray] = {}
    heads = []
    cur = x
    for i, l in enumerate(cfg.layers):
        prev = cur
        if l.kind == "convolutional":
            if l.batch_normalize:
                raise ShapeError("toy training does not support batch-normalized layers")
            w, b = params[i]
            pre = kernels.conv2d_forward(prev, w, b, l.stride, l.padding)
            pre_acts[i] = pre
            cur = activate(pre, l.activation)
        elif l.kind == "shortcut":
            pre = prev + outputs[cfg.resolve(i, l.from_index)]
            pre_acts[i] = pre
            cur = activate(pre, l.activation)
        elif l.kind == "route":
            cur = np.concatenate([outputs[cfg.resolve(i, r)] for r in l.layers], axis=1)
        elif l.kind == "upsample":
            cur = prev.repeat(l.stride, axis=2).repeat(l.stride, axis=3)
        elif l.kind == "yolo":
            heads.append(cur)
        if not np.all(np.isfinite(cur)):
            raise NumericFaultError(f"non-finite activation at layer {i} ({l.kind})")
        outputs.append(cur)
    return heads, {"x": x, "outputs": outputs, "pre": pre_acts}


def backward(cfg: NetworkConfig, params: dict, cache: dict, head_grads: list[np.ndarray]) -> dict:
    """Parameter gradients ``layer -> (dw, db)`` given gradients w.r.t. each head."""
    outputs = cache["outputs"]
    grads_out: list[np.ndarray | None] = [None] * len(cfg.layers)

    def push(j: int, g: np.ndarray):
        if j < 0:
            return  # network input
        grads_out[j] = g if grads_out[j] is None else grads_out[j] + g

    for h, i in enumerate(cfg.yolo_indices):
        push(i, head_grads[h])
    pgrads = {}
    for i in range(len(cfg.layers) - 1, -1, -1):
        l = cfg.layers[i]
        g = grads_out[i]
        if g is None:
            if l.kind == "convolutional":
                w, b = params[i]
                pgrads[i] = (np.zeros_like(w), np.zeros_like(b))
            continue
        inp = cache["x"] if i == 0 else outputs[i - 1]
        if l.kind == "convolutional":
            w, _ = params[i]
            gpre = activation_backward(cache["pre"][i], g, l.activation)
            dx, dw, db = conv_backward(inp, w, gpre, l.stride, l.padding, need_dx=i > 0)
            pgrads[i] = (dw, db)
            if i > 0:
                push(i - 1, dx)
        elif l.kind == "shortcut":
            gpre = activation_backward(cache["pre"][i], g, l.activation)
            push(i - 1, gpre)
            push(cfg.resolve(i, l.from_index), gpre)
        elif l.kind == "route":
            srcs = [cfg.resolve(i, r) for r in l.layers]
            parts = concat_backward(g, [outputs[j].shape[1] for j in srcs])
            for j, part in zip(srcs, parts):
                push(j, part)
        elif l.kind == "upsample":
            push(i - 1, upsample_backward(g, l.stride))
        elif l.kind == "yolo":
            push(i - 1, g)
    return pgrads
