"""Detection metrics: greedy matching, all-point AP, precision/recall/F1, mAP."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .data.schema import CLASS_NAMES
from .errors import InvalidInputError
from .geometry import Box, iou
from .postprocess import Detection

GroundTruth = tuple[int, Box]


@dataclass(frozen=True)
class MatchEntry:
    image: int
    det_index: int
    class_id: int
    score: float
    tp: bool
    gt_index: int | None
    iou: float


@dataclass
class MatchResult:
    entries: list[MatchEntry]  # descending score
    n_gt: dict[int, int]

    def flags(self, class_id: int) -> list[bool]:
        return [e.tp for e in self.entries if e.class_id == class_id]


def match_detections(
    dets: Sequence[Sequence[Detection]], gts: Sequence[Sequence[GroundTruth]], iou_threshold: float = 0.5
) -> MatchResult:
    """Greedy score-ordered matching against unmatched same-class ground truth in the same image."""
    if len(dets) != len(gts):
        raise InvalidInputError(f"{len(dets)} prediction lists for {len(gts)} images")
    n_gt: dict[int, int] = {}
    for image_gts in gts:
        for c, _ in image_gts:
            n_gt[c] = n_gt.get(c, 0) + 1
    order = sorted(
        ((img, k) for img, image_dets in enumerate(dets) for k in range(len(image_dets))),
        key=lambda ik: -dets[ik[0]][ik[1]].score,
    )
    used = [[False] * len(g) for g in gts]
    entries = []
    for img, k in order:
        d = dets[img][k]
        best, best_iou = None, -1.0
        for g, (c, box) in enumerate(gts[img]):
            if c != d.class_id or used[img][g]:
                continue
            v = iou(d.box, box)
            if v > best_iou:
                best, best_iou = g, v
        if best is not None and best_iou >= iou_threshold:
            used[img][best] = True
            entries.append(MatchEntry(img, k, d.class_id, d.score, True, best, best_iou))
        else:
            entries.append(MatchEntry(img, k, d.class_id, d.score, False, None, max(best_iou, 0.0)))
    return MatchResult(entries, n_gt)


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """Area under the precision envelope over recall (all-point interpolation)."""
    if n_gt <= 0:
        return 0.0
    recall = [0.0]
    precision = [0.0]
    tp = 0
    for i, f in enumerate(flags, start=1):
        tp += bool(f)
        recall.append(tp / n_gt)
        precision.append(tp / i)
    recall.append(1.0)
    precision.append(0.0)
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    return sum((recall[i] - recall[i - 1]) * precision[i] for i in range(1, len(recall)))


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    ap: float
    f1: float
    n_gt: int = 0
    n_det: int = 0
    flags: tuple[str, ...] = ()

    @classmethod
    def from_pr(cls, precision: float, recall: float, ap: float = 0.0, **kw) -> "ClassMetrics":
        return cls(precision, recall, ap, f1_score(precision, recall), **kw)


@dataclass
class EvalReport:
    classes: dict[int, ClassMetrics]
    overall: ClassMetrics  # micro-averaged P/R/F1; ap holds mAP
    macro: ClassMetrics
    mean_matched_iou: float
    class_names: tuple[str, ...] = field(default=CLASS_NAMES)

    @property
    def map(self) -> float:
        return self.overall.ap

    def to_dict(self) -> dict:
        r = lambda v: round(v, 3)
        def row(m: ClassMetrics) -> dict:
            out = {"precision": r(m.precision), "recall": r(m.recall), "ap": r(m.ap), "f1": r(m.f1),
                   "n_gt": m.n_gt, "n_det": m.n_det}
            if m.flags:
                out["flags"] = list(m.flags)
            return out
        return {
            "classes": {self.class_names[c]: row(m) for c, m in sorted(self.classes.items())},
            "overall": {"precision": r(self.overall.precision), "recall": r(self.overall.recall),
                        "f1": r(self.overall.f1), "map": r(self.overall.ap),
                        "n_gt": self.overall.n_gt, "n_det": self.overall.n_det},
            "macro": {"precision": r(self.macro.precision), "recall": r(self.macro.recall),
                      "f1": r(self.macro.f1), "map": r(self.macro.ap)},
            "mean_matched_iou": r(self.mean_matched_iou),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate(
    predictions: Sequence[Sequence[Detection]],
    ground_truth: Sequence[Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
    class_names: Sequence[str] = CLASS_NAMES,
) -> EvalReport:
    n_classes = len(class_names)
    for image_dets in predictions:
        for d in image_dets:
            if not 0 <= d.class_id < n_classes:
                raise InvalidInputError(f"prediction class {d.class_id} is not in the schema")
    for image_gts in ground_truth:
        for c, _ in image_gts:
            if not 0 <= c < n_classes:
                raise InvalidInputError(f"ground-truth class {c} is not in the schema")
    m = match_detections(predictions, ground_truth, iou_threshold)
    per_class: dict[int, ClassMetrics] = {}
    tot_tp = tot_det = tot_gt = 0
    for c in range(n_classes):
        flags = m.flags(c)
        n_gt = m.n_gt.get(c, 0)
        tp = sum(flags)
        notes = []
        if n_gt == 0:
            notes.append("no_ground_truth")
        precision = tp / len(flags) if flags else 0.0
        recall = tp / n_gt if n_gt else 0.0
        per_class[c] = ClassMetrics.from_pr(
            precision, recall, average_precision(flags, n_gt), n_gt=n_gt, n_det=len(flags), flags=tuple(notes)
        )
        tot_tp += tp
        tot_det += len(flags)
        tot_gt += n_gt
    scored = [per_class[c] for c in range(n_classes) if per_class[c].n_gt > 0]
    mean_ap = sum(p.ap for p in scored) / len(scored) if scored else 0.0
    micro_p = tot_tp / tot_det if tot_det else 0.0
    micro_r = tot_tp / tot_gt if tot_gt else 0.0
    overall = ClassMetrics.from_pr(micro_p, micro_r, mean_ap, n_gt=tot_gt, n_det=tot_det)
    if scored:
        mp = sum(p.precision for p in scored) / len(scored)
        mr = sum(p.recall for p in scored) / len(scored)
    else:
        mp = mr = 0.0
    macro = ClassMetrics.from_pr(mp, mr, mean_ap)
    tps = [e.iou for e in m.entries if e.tp]
    return EvalReport(per_class, overall, macro, sum(tps) / len(tps) if tps else 0.0, tuple(class_names))
