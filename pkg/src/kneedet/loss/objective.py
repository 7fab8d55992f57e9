"""Four-term detection loss with GIoU replacing the coordinate regression.

Terms (each a mean over its own members):

* box: ``1 - GIoU(decoded prediction, ground truth)`` over positives
* obj: ``BCE(sigmoid(to), 1)`` over positives
* noobj: ``BCE(sigmoid(to), 0)`` over non-ignored negatives
* cls: summed per-class ``BCE(sigmoid(tc), one_hot)`` over positives

Means are taken over the whole batch, so term magnitudes do not depend on
batch size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ShapeError
from ..geometry import giou_with_grad_arrays
from ..postprocess import GridSpec, sigmoid
from .targets import TargetAssignment


@dataclass(frozen=True)
class LossWeights:
    box: float = 1.0
    obj: float = 1.0
    noobj: float = 1.0
    cls: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    giou_term: float
    obj_term: float
    noobj_term: float
    cls_term: float
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def total(self) -> float:
        w = self.weights
        return w.box * self.giou_term + w.obj * self.obj_term + w.noobj * self.noobj_term + w.cls * self.cls_term


def _softplus(x):
    return np.logaddexp(0.0, x)


def loss_and_grad(
    heads: Sequence[np.ndarray],
    assignments: Sequence[TargetAssignment],
    grids: Sequence[GridSpec],
    img_w: int,
    img_h: int,
    weights: LossWeights = LossWeights(),
    need_grad: bool = True,
):
    """Loss over a batch of heads shaped ``(N, B*(5+C), S, S)``.

    Returns ``(LossBreakdown, grads)`` with ``grads`` matching ``heads``
    (``None`` when ``need_grad`` is false).
    """
    N = len(assignments)
    sums = dict(giou=0.0, obj=0.0, noobj=0.0, cls=0.0)
    n_pos = 0
    n_neg = 0
    per_head = []
    for h, (head, g) in enumerate(zip(heads, grids)):
        if head.shape != (N, g.channels, g.S, g.S):
            raise ShapeError(f"head {h} has shape {head.shape}, expected {(N, g.channels, g.S, g.S)}")
        t = head.reshape(N, g.B, 5 + g.C, g.S, g.S)
        idx = []  # (n, k, i, j, gt)
        for n, a in enumerate(assignments):
            for (i, j, k), gt in a.heads[h].positives.items():
                idx.append((n, k, i, j, gt))
        neg = np.ones((N, g.B, g.S, g.S), dtype=bool)
        for n, a in enumerate(assignments):
            neg[n] &= ~a.heads[h].ignore.transpose(2, 0, 1)
        per_head.append((t, g, idx, neg))
        n_pos += len(idx)
        n_neg += int(neg.sum())

    grads = [np.zeros_like(hd) for hd in heads] if need_grad else None
    for h, (t, g, idx, neg) in enumerate(per_head):
        to = t[:, :, 4]
        nz = to[neg]
        sums["noobj"] += float(np.sum(_softplus(nz)))
        if need_grad and n_neg:
            gt_ = grads[h].reshape(t.shape)
            gt_[:, :, 4][neg] += weights.noobj * sigmoid(nz) / n_neg
        if not idx:
            continue
        ix = np.array(idx)
        n_, k_, i_, j_, gi = ix.T
        raw = t[n_, k_, :, i_, j_]  # (P, 5 + C)
        anchors = np.asarray(g.anchors)
        sx, sy = sigmoid(raw[:, 0]), sigmoid(raw[:, 1])
        cx = (j_ + sx) / g.S * img_w
        cy = (i_ + sy) / g.S * img_h
        w = anchors[k_, 0] * np.exp(raw[:, 2]) * (img_w / g.net_w)
        hh = anchors[k_, 1] * np.exp(raw[:, 3]) * (img_h / g.net_h)
        pred = np.stack([cx - w / 2, cy - hh / 2, cx + w / 2, cy + hh / 2], axis=1)
        target = np.array([assignments[n].gt_boxes[gt].as_tuple() for n, gt in zip(n_, gi)])
        gv, dg = giou_with_grad_arrays(pred, target)
        sums["giou"] += float(np.sum(1.0 - gv))
        sums["obj"] += float(np.sum(_softplus(-raw[:, 4])))
        onehot = np.zeros((len(idx), g.C))
        onehot[np.arange(len(idx)), [assignments[n].gt_classes[gt] for n, gt in zip(n_, gi)]] = 1.0
        zc = raw[:, 5:]
        sums["cls"] += float(np.sum(_softplus(zc) - onehot * zc))
        if need_grad:
            d = np.zeros_like(raw)
            cb = -weights.box / n_pos
            d[:, 0] = cb * (dg[:, 0] + dg[:, 2]) * sx * (1 - sx) * img_w / g.S
            d[:, 1] = cb * (dg[:, 1] + dg[:, 3]) * sy * (1 - sy) * img_h / g.S
            d[:, 2] = cb * (dg[:, 2] - dg[:, 0]) * w / 2
            d[:, 3] = cb * (dg[:, 3] - dg[:, 1]) * hh / 2
            d[:, 4] = weights.obj * (sigmoid(raw[:, 4]) - 1.0) / n_pos
            d[:, 5:] = weights.cls * (sigmoid(zc) - onehot) / n_pos
            gt_ = grads[h].reshape(t.shape)
            np.add.at(gt_, (n_, k_, slice(None), i_, j_), d)

    br = LossBreakdown(
        sums["giou"] / n_pos if n_pos else 0.0,
        sums["obj"] / n_pos if n_pos else 0.0,
        sums["noobj"] / n_neg if n_neg else 0.0,
        sums["cls"] / n_pos if n_pos else 0.0,
        weights,
    )
    return br, grads


def _batched(heads, assignment):
    if isinstance(assignment, TargetAssignment):
        return [np.asarray(hd, dtype=np.float64)[None] for hd in heads], [assignment], True
    return [np.asarray(hd, dtype=np.float64) for hd in heads], list(assignment), False


def yolo_loss(heads, assignment, grids, img_w: int, img_h: int, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Loss for one image (heads ``(ch, S, S)``) or a batch (heads ``(N, ch, S, S)``, list of assignments)."""
    hs, asg, _ = _batched(heads, assignment)
    return loss_and_grad(hs, asg, grids, img_w, img_h, weights, need_grad=False)[0]


def yolo_loss_gradient(heads, assignment, grids, img_w: int, img_h: int, weights: LossWeights = LossWeights()):
    hs, asg, single = _batched(heads, assignment)
    grads = loss_and_grad(hs, asg, grids, img_w, img_h, weights)[1]
    return [gr[0] for gr in grads] if single else grads
