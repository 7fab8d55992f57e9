"""Ground-truth to (head, cell, anchor) assignment."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..geometry import Box, NormBox
from ..postprocess import GridSpec

LOGIT_EPS = 1e-9


@dataclass
class HeadTargets:
    positives: dict[tuple[int, int, int], int]  # (i, j, k) -> gt index
    ignore: np.ndarray  # bool (S, S, B); includes every positive
    encoded: dict[tuple[int, int, int], tuple[float, float, float, float]]


@dataclass
class TargetAssignment:
    heads: list[HeadTargets]
    gt_boxes: list[Box]  # image pixels
    gt_classes: list[int]
    dropped: list[int] = field(default_factory=list)

    @property
    def num_positives(self) -> int:
        return sum(len(h.positives) for h in self.heads)


def _shape_iou(w1: float, h1: float, w2: float, h2: float) -> float:
    inter = min(w1, w2) * min(h1, h2)
    return inter / (w1 * h1 + w2 * h2 - inter)


def _logit(p: float) -> float:
    p = min(max(p, LOGIT_EPS), 1.0 - LOGIT_EPS)
    return math.log(p / (1.0 - p))


def assign_targets(
    gts: Sequence[tuple[int, NormBox]],
    grids: Sequence[GridSpec],
    img_w: int,
    img_h: int,
    ignore_iou: float = 0.5,
) -> TargetAssignment:
    """Assign each ground truth to its best-shaped anchor at the cell holding its center.

    Anchor choice compares shapes only (both boxes centered at the origin).
    A (cell, anchor) whose anchor box, centered in its cell, overlaps any
    ground truth with IoU above ``ignore_iou`` is exempt from the
    no-objectness penalty.
    """
    gt_boxes = []
    for _, nb in gts:
        gt_boxes.append(
            Box((nb.cx - nb.w / 2) * img_w, (nb.cy - nb.h / 2) * img_h,
                (nb.cx + nb.w / 2) * img_w, (nb.cy + nb.h / 2) * img_h)
        )
    heads = [HeadTargets({}, np.zeros((g.S, g.S, g.B), dtype=bool), {}) for g in grids]
    owner_area: dict[tuple[int, int, int, int], float] = {}
    dropped: list[int] = []

    for n, (cls, nb) in enumerate(gts):
        best = None
        best_iou = -1.0
        for h, g in enumerate(grids):
            for k, (aw, ah) in enumerate(g.anchors):
                v = _shape_iou(nb.w * g.net_w, nb.h * g.net_h, aw, ah)
                if v > best_iou:
                    best, best_iou = (h, k), v
        h, k = best
        g = grids[h]
        j = min(int(math.floor(nb.cx * g.S)), g.S - 1)
        i = min(int(math.floor(nb.cy * g.S)), g.S - 1)
        key = (h, i, j, k)
        area = nb.w * nb.h
        if key in owner_area:
            prev = heads[h].positives[(i, j, k)]
            if area > owner_area[key]:
                dropped.append(prev)
            else:
                dropped.append(n)
                continue
        owner_area[key] = area
        aw, ah = g.anchors[k]
        heads[h].positives[(i, j, k)] = n
        heads[h].encoded[(i, j, k)] = (
            _logit(nb.cx * g.S - j),
            _logit(nb.cy * g.S - i),
            math.log(nb.w * g.net_w / aw),
            math.log(nb.h * g.net_h / ah),
        )
    if dropped:
        warnings.warn(f"dropped {len(dropped)} ground truth(s) competing for the same anchor slot", stacklevel=2)

    if gt_boxes:
        gb = np.array([b.as_tuple() for b in gt_boxes])
        g_area = (gb[:, 2] - gb[:, 0]) * (gb[:, 3] - gb[:, 1])
        for h, g in enumerate(grids):
            S = g.S
            c = (np.arange(S) + 0.5) / S
            cx = c[None, :, None] * img_w
            cy = c[:, None, None] * img_h
            anchors = np.asarray(g.anchors)
            aw = anchors[None, None, :, 0] * img_w / g.net_w
            ah = anchors[None, None, :, 1] * img_h / g.net_h
            ax1, ax2 = cx - aw / 2, cx + aw / 2
            ay1, ay2 = cy - ah / 2, cy + ah / 2
            a_area = aw * ah
            mask = heads[h].ignore
            for t in range(len(gb)):
                iw = np.clip(np.minimum(ax2, gb[t, 2]) - np.maximum(ax1, gb[t, 0]), 0, None)
                ih = np.clip(np.minimum(ay2, gb[t, 3]) - np.maximum(ay1, gb[t, 1]), 0, None)
                inter = iw * ih
                mask |= inter / (a_area + g_area[t] - inter) > ignore_iou
            for cell in heads[h].positives:
                mask[cell] = True
    return TargetAssignment(heads, gt_boxes, [c for c, _ in gts], sorted(dropped))
