"""Axis-aligned box arithmetic.

Boxes are absolute corner-form ``(x1, y1, x2, y2)`` rectangles. Normalized
center-form boxes only appear at label-file and head-decoding boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise InvalidInputError(f"non-finite box coordinate in {self!r}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidInputError(f"inverted box {self!r}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def scaled(self, s: float) -> "Box":
        return Box(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)


@dataclass(frozen=True)
class NormBox:
    """Center-form box normalized by image width and height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.cx, self.cy, self.w, self.h):
            if not math.isfinite(v):
                raise InvalidInputError(f"non-finite coordinate in {self!r}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise InvalidInputError(f"center outside [0, 1] in {self!r}")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise InvalidInputError(f"size outside (0, 1] in {self!r}")


class GIoUResult(NamedTuple):
    giou: float
    iou: float
    intersection: float
    union_area: float
    hull_area: float


def _areas(a: Box, b: Box) -> tuple[float, float, float]:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    # rounding can put the hull a hair below the union when one box contains the other
    return inter, union, max(hull, union)


def iou(a: Box, b: Box) -> float:
    inter, union, _ = _areas(a, b)
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Box, b: Box) -> GIoUResult:
    inter, union, hull = _areas(a, b)
    if hull <= 0.0:
        raise DegenerateGeometryError(f"zero-area hull for {a!r} and {b!r}")
    i = inter / union if union > 0.0 else 0.0
    return GIoUResult(i - (hull - union) / hull, i, inter, union, hull)


def giou_gradient(pred: Box, target: Box) -> tuple[float, float, float, float]:
    """Partial derivatives of ``giou(pred, target)`` w.r.t. the corners of ``pred``.

    Where an edge of ``pred`` coincides with an edge of ``target`` the
    derivative is taken as if the ``pred`` edge were the active one, both in
    the intersection and in the hull. Touching (zero-width) overlaps count as
    overlapping. With this rule ``pred == target`` is an exact stationary point.
    """
    if pred.area <= 0.0:
        raise DegenerateGeometryError(f"degenerate prediction {pred!r}")
    g = giou_with_grad_arrays(
        np.array([pred.as_tuple()], dtype=np.float64),
        np.array([target.as_tuple()], dtype=np.float64),
    )[1][0]
    return (float(g[0]), float(g[1]), float(g[2]), float(g[3]))


def giou_with_grad_arrays(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized GIoU of ``(n, 4)`` box arrays and its gradient w.r.t. ``pred``.

    Returns ``(giou[n], grad[n, 4])``.
    """
    px1, py1, px2, py2 = pred.T
    tx1, ty1, tx2, ty2 = target.T
    pw = px2 - px1
    ph = py2 - py1
    if np.any(pw <= 0.0) or np.any(ph <= 0.0):
        raise DegenerateGeometryError("degenerate prediction box")
    area_p = pw * ph
    area_t = (tx2 - tx1) * (ty2 - ty1)

    # ties resolve to the prediction's own edge
    left_p = px1 >= tx1
    top_p = py1 >= ty1
    right_p = px2 <= tx2
    bottom_p = py2 <= ty2
    iw = np.where(right_p, px2, tx2) - np.where(left_p, px1, tx1)
    ih = np.where(bottom_p, py2, ty2) - np.where(top_p, py1, ty1)
    overlap = (iw >= 0.0) & (ih >= 0.0)
    inter = np.where(overlap, iw * ih, 0.0)
    union = area_p + area_t - inter

    hl_p = px1 <= tx1
    ht_p = py1 <= ty1
    hr_p = px2 >= tx2
    hb_p = py2 >= ty2
    cw = np.where(hr_p, px2, tx2) - np.where(hl_p, px1, tx1)
    ch = np.where(hb_p, py2, ty2) - np.where(ht_p, py1, ty1)
    hull = cw * ch

    g = inter / union - (np.maximum(hull, union) - union) / hull

    # d inter / d (x1, y1, x2, y2)
    dI = np.zeros((len(g), 4))
    ov = overlap.astype(np.float64)
    dI[:, 0] = -ih * left_p * ov
    dI[:, 2] = ih * right_p * ov
    dI[:, 1] = -iw * top_p * ov
    dI[:, 3] = iw * bottom_p * ov
    dA = np.stack([-ph, -pw, ph, pw], axis=1)
    dU = dA - dI
    dC = np.zeros_like(dI)
    dC[:, 0] = -ch * hl_p
    dC[:, 2] = ch * hr_p
    dC[:, 1] = -cw * ht_p
    dC[:, 3] = cw * hb_p

    u = union[:, None]
    c = hull[:, None]
    grad = dI / u - inter[:, None] * dU / u**2 + dU / c - u * dC / c**2
    return g, grad


def norm_to_abs(nb: NormBox, img_w: int, img_h: int) -> Box:
    if img_w <= 0 or img_h <= 0:
        raise InvalidInputError("image dimensions must be positive")
    x1 = (nb.cx - nb.w / 2) * img_w
    y1 = (nb.cy - nb.h / 2) * img_h
    x2 = (nb.cx + nb.w / 2) * img_w
    y2 = (nb.cy + nb.h / 2) * img_h
    return Box(
        min(max(x1, 0.0), img_w),
        min(max(y1, 0.0), img_h),
        min(max(x2, 0.0), img_w),
        min(max(y2, 0.0), img_h),
    )


def abs_to_norm(b: Box, img_w: int, img_h: int) -> NormBox:
    if img_w <= 0 or img_h <= 0:
        raise InvalidInputError("image dimensions must be positive")
    return NormBox(
        (b.x1 + b.x2) / 2 / img_w,
        (b.y1 + b.y2) / 2 / img_h,
        (b.x2 - b.x1) / img_w,
        (b.y2 - b.y1) / img_h,
    )
