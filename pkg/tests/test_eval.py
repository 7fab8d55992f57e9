import json

import numpy as np
import pytest

from kneedet.errors import InvalidInputError
from kneedet.evaluation import ClassMetrics, average_precision, evaluate, f1_score, match_detections
from kneedet.geometry import Box
from kneedet.postprocess import Detection

from .oracles import all_flag_sequences, brute_match, envelope_ap, match_sweep


def d(box, score, cls=0):
    return Detection(Box(*box), cls, score)


@pytest.mark.parametrize(
    "flags,n_gt,expected",
    [([True], 1, 1.0), ([True, False], 1, 1.0), ([False, True], 1, 0.5), ([], 3, 0.0), ([True], 0, 0.0)],
)
def test_ap_examples(flags, n_gt, expected):
    assert average_precision(flags, n_gt) == pytest.approx(expected, abs=1e-15)


def test_ap_exhaustive_short_sequences():
    for flags in all_flag_sequences(8):
        tp = sum(flags)
        for n_gt in {max(tp, 1), tp + 2}:
            assert average_precision(flags, n_gt) == pytest.approx(envelope_ap(flags, n_gt), abs=1e-12)


def test_ap_random_sequences(rng):
    for _ in range(2000):
        n = int(rng.integers(0, 13))
        flags = list(rng.random(n) < rng.random())
        n_gt = sum(flags) + int(rng.integers(0, 3))
        ap = average_precision(flags, n_gt)
        assert 0.0 <= ap <= 1.0
        assert ap == pytest.approx(envelope_ap(flags, n_gt), abs=1e-12)


def test_match_examples():
    gt = [(0, Box(0, 0, 10, 10))]
    r = match_detections([[d((0, 0, 10, 10), 0.5)]], [gt])
    assert r.entries[0].tp and r.entries[0].iou == 1.0
    # IoUs 0.9 and 0.8 against the GT; the higher-scored det wins regardless of IoU
    a = d((0, 0, 10, 9), 0.9)
    b = d((0, 0, 10, 8), 0.95)
    r = match_detections([[a, b]], [gt])
    assert [(e.det_index, e.tp) for e in r.entries] == [(1, True), (0, False)]
    r = match_detections([[d((0, 0, 10, 10), 0.9, cls=0)]], [[(1, Box(0, 0, 10, 10))]])
    assert not r.entries[0].tp


def test_match_iou_tie_prefers_lower_gt_index():
    gts = [(0, Box(0, 0, 10, 10)), (0, Box(0, 0, 10, 10))]
    r = match_detections([[d((0, 0, 10, 10), 0.9), d((0, 0, 10, 10), 0.8)]], [gts])
    assert [e.gt_index for e in r.entries] == [0, 1]


def test_match_brute_force_sweep(rng):
    for dets, gts in match_sweep(rng, per_size=10):
        got = match_detections(
            [[Detection(Box(*b), c, s) for c, s, b in img] for img in dets],
            [[(c, Box(*b)) for c, b in img] for img in gts],
        )
        assert [(e.image, e.det_index, e.tp, e.gt_index) for e in got.entries] == brute_match(dets, gts, 0.5)


@pytest.mark.parametrize(
    "p,r,f1",
    [(1.000, 1.000, 1.000), (1.000, 0.993, 0.996), (0.991, 1.000, 0.995), (0.971, 1.000, 0.985), (0.990, 0.998, 0.994)],
)
def test_f1_reference_rows(p, r, f1):
    assert abs(f1_score(p, r) - f1) <= 0.0005
    assert ClassMetrics.from_pr(p, r).f1 == f1_score(p, r)


def test_f1_degenerate():
    assert f1_score(0.0, 0.0) == 0.0


def _corpus(rng, n=20):
    gts = []
    for _ in range(n):
        img = []
        for c in rng.integers(0, 4, size=int(rng.integers(1, 3))):
            x, y = rng.uniform(0, 60, 2)
            img.append((int(c), Box(x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40))))
        gts.append(img)
    return gts


def test_perfect_predictions(rng):
    gts = _corpus(rng)
    preds = [[Detection(b, c, 0.9) for c, b in img] for img in gts]
    rep = evaluate(preds, gts)
    for m in rep.classes.values():
        if m.n_gt:
            assert (m.precision, m.recall, m.ap, m.f1) == (1.0, 1.0, 1.0, 1.0)
    assert rep.map == 1.0 and rep.overall.f1 == 1.0 and rep.mean_matched_iou == 1.0


def test_empty_predictions(rng):
    gts = _corpus(rng)
    rep = evaluate([[] for _ in gts], gts)
    assert rep.map == 0.0 and rep.overall.precision == 0.0 and rep.overall.recall == 0.0
    assert all(m.ap == 0.0 for m in rep.classes.values())


def test_unknown_class_rejected():
    with pytest.raises(InvalidInputError):
        evaluate([[d((0, 0, 1, 1), 0.5, cls=4)]], [[]])


def test_class_without_gt_flagged_and_excluded_from_map():
    gts = [[(0, Box(0, 0, 10, 10))]]
    preds = [[d((0, 0, 10, 10), 0.9), d((0, 0, 10, 10), 0.8, cls=2)]]
    rep = evaluate(preds, gts)
    assert rep.classes[2].flags == ("no_ground_truth",) and rep.classes[2].ap == 0.0
    assert rep.map == 1.0
    assert rep.overall.precision == 0.5


def test_report_json_key_order():
    rep = evaluate([[d((0, 0, 10, 10), 0.123456)]], [[(0, Box(0, 0, 10, 10))]])
    obj = json.loads(rep.to_json())
    assert list(obj) == ["classes", "overall", "macro", "mean_matched_iou"]
    assert list(obj["classes"]) == ["kneeApView", "kneeLatView", "tkaApView", "tkaLatView"]
    assert obj["overall"]["map"] == 1.0
