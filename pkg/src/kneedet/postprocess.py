"""Head decoding, confidence filtering and class-wise NMS.

Head layout is ``B * (5 + C)`` channels per cell: for anchor ``k`` the
channels ``k*(5+C) .. k*(5+C)+4+C`` hold ``tx, ty, tw, th, to, tc_1..tc_C``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidInputError, NumericFaultError, ParseError, ShapeError
from .geometry import Box, iou
from .model import NetworkConfig

NUM_CLASSES = 4
DEFAULT_CONF = 0.5
DEFAULT_NMS = 0.45


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class GridSpec:
    S: int
    B: int
    C: int
    anchors: tuple[tuple[float, float], ...]  # (w, h) in network-input pixels
    net_w: int
    net_h: int

    def __post_init__(self):
        if len(self.anchors) != self.B:
            raise InvalidInputError(f"{len(self.anchors)} anchors given for B={self.B}")
        if any(w <= 0 or h <= 0 for w, h in self.anchors):
            raise InvalidInputError("anchors must be strictly positive")

    @property
    def channels(self) -> int:
        return self.B * (5 + self.C)


def grids_from_config(cfg: NetworkConfig) -> list[GridSpec]:
    grids = []
    for i in cfg.yolo_indices:
        l = cfg.layers[i]
        c, h, w = cfg.shapes[i]
        if h != w:
            raise ShapeError(f"yolo layer {i} has a non-square grid {h}x{w}")
        grids.append(GridSpec(h, len(l.mask), l.classes, tuple(l.masked_anchors), cfg.width, cfg.height))
    return grids


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    score: float
    objectness: float | None = None
    class_prob: float | None = None

    @classmethod
    def from_probs(cls, box: Box, class_id: int, objectness: float, class_prob: float) -> "Detection":
        return cls(box, class_id, objectness * class_prob, objectness, class_prob)


def decode_arrays(head: np.ndarray, grid: GridSpec, img_w: int, img_h: int):
    """Decode one head into flat arrays ordered by (row, col, anchor).

    Returns ``boxes (n, 4)`` in image pixels, ``objectness (n,)`` and
    ``class_probs (n, C)`` with ``n = S*S*B``.
    """
    S, B, C = grid.S, grid.B, grid.C
    if head.shape != (grid.channels, S, S):
        raise ShapeError(f"head shape {head.shape} does not match grid {(grid.channels, S, S)}")
    if not np.all(np.isfinite(head)):
        raise NumericFaultError("non-finite value in head tensor")
    t = head.reshape(B, 5 + C, S, S).transpose(2, 3, 0, 1)  # (i, j, k, attr)
    jj = np.arange(S)[None, :, None]
    ii = np.arange(S)[:, None, None]
    anchors = np.asarray(grid.anchors, dtype=np.float64)
    cx = (jj + sigmoid(t[..., 0])) / S * img_w
    cy = (ii + sigmoid(t[..., 1])) / S * img_h
    w = anchors[None, None, :, 0] * np.exp(t[..., 2]) * (img_w / grid.net_w)
    h = anchors[None, None, :, 1] * np.exp(t[..., 3]) * (img_h / grid.net_h)
    boxes = np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1).reshape(-1, 4)
    obj = sigmoid(t[..., 4]).reshape(-1)
    cls = sigmoid(t[..., 5:]).reshape(-1, C)
    return boxes, obj, cls


def decode(head: np.ndarray, grid: GridSpec, img_w: int, img_h: int) -> list[Detection]:
    """One detection per (cell, anchor, class), each carrying that class's probability."""
    boxes, obj, cls = decode_arrays(head, grid, img_w, img_h)
    dets = []
    for n in range(len(boxes)):
        box = Box(*(float(v) for v in boxes[n]))
        for c in range(grid.C):
            dets.append(Detection.from_probs(box, c, float(obj[n]), float(cls[n, c])))
    return dets


def decode_filtered(heads, grids, img_w: int, img_h: int, threshold: float) -> list[Detection]:
    """``filter_confidence(decode(...))`` over several heads without building rejected candidates."""
    dets = []
    for head, grid in zip(heads, grids):
        boxes, obj, cls = decode_arrays(head, grid, img_w, img_h)
        scores = obj[:, None] * cls
        for n, c in zip(*np.nonzero(scores >= threshold)):
            box = Box(*(float(v) for v in boxes[n]))
            dets.append(Detection(box, int(c), float(scores[n, c]), float(obj[n]), float(cls[n, c])))
    return dets


def filter_confidence(dets: Iterable[Detection], threshold: float) -> list[Detection]:
    return [d for d in dets if d.score >= threshold]


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy class-wise suppression; ties in score keep input order."""
    if not 0.0 < iou_threshold < 1.0:
        raise InvalidInputError(f"NMS IoU threshold must be in (0, 1), got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: dict[int, list[Detection]] = {}
    out = []
    for i in order:
        d = dets[i]
        same = kept.setdefault(d.class_id, [])
        if all(iou(d.box, k.box) <= iou_threshold for k in same):
            same.append(d)
            out.append(d)
    return out


def detect(heads, grids, img_w: int, img_h: int, conf: float = DEFAULT_CONF, nms_iou: float = DEFAULT_NMS):
    return nms(decode_filtered(heads, grids, img_w, img_h, conf), nms_iou)


def format_detections(dets: Iterable[Detection]) -> str:
    lines = []
    for d in dets:
        b = d.box
        lines.append(f"{d.class_id} {d.score:.6g} {b.x1:.6g} {b.y1:.6g} {b.x2:.6g} {b.y2:.6g}")
    return "".join(line + "\n" for line in lines)


def parse_detections(text: str, num_classes: int = NUM_CLASSES) -> list[Detection]:
    dets = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise ParseError(f"expected 6 fields, got {len(parts)}", lineno)
        try:
            cls = int(parts[0])
            score, x1, y1, x2, y2 = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"malformed detection {raw.strip()!r}", lineno) from None
        if not 0 <= cls < num_classes:
            raise ParseError(f"class id {cls} out of range", lineno)
        if not (0.0 <= score <= 1.0):
            raise ParseError(f"score {score} outside [0, 1]", lineno)
        try:
            box = Box(x1, y1, x2, y2)
        except InvalidInputError as exc:
            raise ParseError(str(exc), lineno) from None
        dets.append(Detection(box, cls, score))
    return dets


def kmeans_anchors(sizes: np.ndarray, k: int, seed: int = 0, iters: int = 100) -> list[tuple[float, float]]:
    """Cluster ``(w, h)`` pairs with ``1 - IoU`` distance; result sorted by area."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if len(sizes) < k:
        raise InvalidInputError(f"need at least {k} boxes to fit {k} anchors")
    rng = np.random.default_rng(seed)
    centers = sizes[rng.choice(len(sizes), k, replace=False)]
    for _ in range(iters):
        inter = np.minimum(sizes[:, None, 0], centers[None, :, 0]) * np.minimum(sizes[:, None, 1], centers[None, :, 1])
        union = sizes[:, None].prod(-1) + centers[None].prod(-1) - inter
        assign = np.argmax(inter / union, axis=1)
        new = np.array([np.median(sizes[assign == c], axis=0) if np.any(assign == c) else centers[c] for c in range(k)])
        if np.allclose(new, centers):
            break
        centers = new
    centers = centers[np.argsort(centers.prod(-1), kind="stable")]
    return [(float(round(w, 1)), float(round(h, 1))) for w, h in centers]


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))
