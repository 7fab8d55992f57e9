import warnings

import numpy as np
import pytest

from kneedet.data import (
    CLASS_NAMES,
    DatasetIndex,
    ImageRecord,
    format_folds,
    kfold_split,
    load_index,
    read_labels,
    read_pgm,
    synth_generate,
    write_labels,
    write_pgm,
)
from kneedet.data.index import format_index
from kneedet.data.pgm import read_pgm_raw
from kneedet.data.synth import OUTLINE
from kneedet.errors import InvalidInputError, MissingFileError, ParseError
from kneedet.geometry import NormBox


def test_schema():
    assert CLASS_NAMES == ("kneeApView", "kneeLatView", "tkaApView", "tkaLatView")


def test_read_labels_examples():
    assert read_labels("0 0.5 0.5 1 1") == [(0, NormBox(0.5, 0.5, 1.0, 1.0))]
    assert read_labels("") == []
    assert read_labels("\n  \n") == []


@pytest.mark.parametrize(
    "text,line",
    [
        ("4 .5 .5 .1 .1", 1),
        ("0 .5 .5 .1 .1\n-1 .5 .5 .1 .1", 2),
        ("0 1.5 .5 .1 .1", 1),
        ("0 .5 .5 0 .1", 1),
        ("0 .5 .5 .1", 1),
        ("0 .5 .5 .1 x", 1),
    ],
)
def test_read_labels_errors(text, line):
    with pytest.raises(ParseError, match=f"line {line}:") as exc:
        read_labels(text)
    assert exc.value.line == line


def test_label_round_trip(rng):
    anns = [
        (int(rng.integers(0, 4)), NormBox(*rng.uniform(0, 1, 2), *rng.uniform(1e-3, 1, 2)))
        for _ in range(200)
    ]
    back = read_labels(write_labels(anns))
    assert [c for c, _ in back] == [c for c, _ in anns]
    for (_, a), (_, b) in zip(anns, back):
        for u, v in zip((a.cx, a.cy, a.w, a.h), (b.cx, b.cy, b.w, b.h)):
            assert float(f"{u:.6g}") == v
    assert write_labels(back) == write_labels(anns)


def _write_index(tmp_path, rows, labels):
    (tmp_path / "labels").mkdir(exist_ok=True)
    for name, text in labels.items():
        (tmp_path / "labels" / name).write_text(text)
    text = "image_path,patient_id,gender,label_path\n" + "".join(f"{r}\n" for r in rows)
    return text


def test_index_reference_class_counts(tmp_path):
    counts = (3608, 1256, 2121, 1649)
    line = {c: f"{c} 0.5 0.5 0.2 0.2\n" for c in range(4)}
    rows, labels = [], {}
    for c, n in enumerate(counts):
        # pack each class into files of 100 objects plus a remainder file
        chunks = [100] * (n // 100) + ([n % 100] if n % 100 else [])
        for j, m in enumerate(chunks):
            name = f"c{c}_{j}.txt"
            labels[name] = line[c] * m
            rows.append(f"img/c{c}_{j}.pgm,p{c}_{j},unknown,labels/{name}")
    index = load_index(_write_index(tmp_path, rows, labels), tmp_path, check_images=False)
    assert index.class_counts == counts
    assert sum(index.class_counts) == 8634


def test_index_empty_and_errors(tmp_path):
    assert len(load_index("")) == 0
    labels = {"a.txt": "0 .5 .5 .1 .1\n"}
    dup = _write_index(tmp_path, ["x.pgm,p1,F,labels/a.txt", "x.pgm,p2,M,labels/a.txt"], labels)
    with pytest.raises(ParseError, match="duplicate"):
        load_index(dup, tmp_path, check_images=False)
    with pytest.raises(ParseError, match="gender"):
        load_index(_write_index(tmp_path, ["x.pgm,p1,X,labels/a.txt"], labels), tmp_path, check_images=False)
    with pytest.raises(ParseError, match="line 2"):
        load_index(_write_index(tmp_path, ["x.pgm,p1,F"], labels), tmp_path, check_images=False)
    with pytest.raises(MissingFileError, match="nope.txt"):
        load_index(_write_index(tmp_path, ["x.pgm,p1,F,labels/nope.txt"], labels), tmp_path, check_images=False)
    with pytest.raises(MissingFileError, match="x.pgm"):
        load_index(_write_index(tmp_path, ["x.pgm,p1,F,labels/a.txt"], labels), tmp_path)


def _index(patients):
    """patients: list of (patient_id, gender, n_images)."""
    recs = []
    for pid, gender, n in patients:
        recs.extend(ImageRecord(f"{pid}/{i}.pgm", pid, gender, ()) for i in range(n))
    return DatasetIndex(tuple(recs))


def _check_partition(index, fa):
    assert sorted(fa.folds) == sorted(r.image_path for r in index.records)
    owner = {}
    for r in index.records:
        assert owner.setdefault(r.patient_id, fa.folds[r.image_path]) == fa.folds[r.image_path]
    for f, pids in enumerate(fa.patients):
        assert all(owner[p] == f for p in pids)


def test_split_one_patient_per_fold():
    index = _index([(f"p{i}", "F", 1) for i in range(5)])
    fa = kfold_split(index, 5, seed=3)
    assert sorted(fa.folds.values()) == [0, 1, 2, 3, 4]
    assert all(len(p) == 1 for p in fa.patients)


def test_split_keeps_patient_together():
    index = _index([("big", "M", 3)] + [(f"p{i}", "M", 1) for i in range(6)])
    fa = kfold_split(index, 3, seed=0)
    assert len({fa.folds[f"big/{i}.pgm"] for i in range(3)}) == 1
    _check_partition(index, fa)


def test_split_gender_balance(rng):
    genders = ["F"] * 60 + ["M"] * 40
    index = _index([(f"p{i:03d}", g, int(rng.integers(1, 5))) for i, g in enumerate(genders)])
    fa = kfold_split(index, 5, seed=7)
    _check_partition(index, fa)
    gender_of = {r.image_path: r.gender for r in index.records}
    for f in range(5):
        imgs = fa.images_in(f)
        frac_f = sum(gender_of[p] == "F" for p in imgs) / len(imgs)
        assert abs(frac_f - 0.60) <= 0.05
    assert kfold_split(index, 5, seed=7) == fa


def test_split_fold_size_bound(rng):
    for trial in range(50):
        pats = [(f"p{i}", str(rng.choice(["F", "M", "unknown"])), int(rng.integers(1, 6))) for i in range(40)]
        index = _index(pats)
        fa = kfold_split(index, 5, seed=trial)
        _check_partition(index, fa)
        sizes = fa.sizes()
        # per stratum the greedy fill keeps folds within one patient of each other
        assert max(sizes) - min(sizes) <= 3 * max(n for *_, n in pats)
        for g in ("F", "M", "unknown"):
            sub = [r for r in index.records if r.gender == g]
            per = [sum(fa.folds[r.image_path] == f for r in sub) for f in range(5)]
            largest = max([n for _, gg, n in pats if gg == g], default=0)
            assert max(per) - min(per) <= largest


def test_split_errors_and_warnings():
    with pytest.raises(ValueError):
        kfold_split(_index([("a", "F", 1)]), 1)
    with pytest.raises(ValueError):
        kfold_split(DatasetIndex(), 5)
    with pytest.warns(UserWarning, match="stratum"):
        fa = kfold_split(_index([("a", "F", 2), ("b", "F", 1)]), 5)
    assert fa.sizes().count(0) == 3
    bad = DatasetIndex((ImageRecord("1.pgm", "a", "F", ()), ImageRecord("2.pgm", "a", "M", ())))
    with pytest.raises(ValueError, match="inconsistent"):
        kfold_split(bad, 2)


def test_format_folds():
    fa = kfold_split(_index([("a", "F", 1), ("b", "F", 1)]), 2)
    assert format_folds(fa).splitlines()[0] == "image_path,fold"
    assert len(format_folds(fa).splitlines()) == 3


def test_pgm_examples():
    assert read_pgm(b"P5\n1 1\n255\n\xff").tolist() == [[[1.0]]]
    img = np.arange(12).reshape(3, 4) * 20
    assert np.array_equal(read_pgm(write_pgm(img, plain=True)), read_pgm(write_pgm(img)))
    with pytest.raises(ParseError, match="truncated"):
        read_pgm(write_pgm(img)[:-1])
    with pytest.raises(ParseError, match="truncated"):
        read_pgm(b"P2\n2 2\n255\n1 2 3\n")
    with pytest.raises(ParseError):
        read_pgm(b"P6\n1 1\n255\n\x00\x00\x00")


def test_pgm_comments_and_16bit():
    assert read_pgm(b"P2 # c\n2 1\n# another\n4\n0 4\n").tolist() == [[[0.0, 1.0]]]
    img = np.array([[0, 1000], [65535, 7]])
    raw, maxval = read_pgm_raw(write_pgm(img, maxval=65535))
    assert maxval == 65535 and np.array_equal(raw, img)


def test_synth_empty_and_small():
    index, images = synth_generate(0)
    assert len(index) == 0 and images == {}
    with pytest.raises(InvalidInputError):
        synth_generate(1, size=16)


def test_synth_ground_truth_exact():
    size = 96
    index, images = synth_generate(30, size, seed=4)
    assert [r.patient_id for r in index.records[:4]] == ["P00000", "P00000", "P00001", "P00001"]
    assert [r.gender for r in index.records[:4]] == ["F", "F", "M", "M"]
    for r in index.records:
        img = images[r.image_path]
        assert 1 <= len(r.annotations) <= 2
        for _, b in r.annotations:
            x1, y1 = round((b.cx - b.w / 2) * size), round((b.cy - b.h / 2) * size)
            x2, y2 = round((b.cx + b.w / 2) * size), round((b.cy + b.h / 2) * size)
            assert 0 <= x1 < x2 <= size and 0 <= y1 < y2 <= size
            # outline lies exactly on the box edge, background just outside it
            assert (img[y1:y2, x1] == OUTLINE).all() and (img[y1:y2, x2 - 1] == OUTLINE).all()
            assert (img[y1, x1:x2] == OUTLINE).all() and (img[y2 - 1, x1:x2] == OUTLINE).all()
            if x1 > 0:
                assert (img[y1:y2, x1 - 1] < OUTLINE).all()
            if y2 < size:
                assert (img[y2, x1:x2] < OUTLINE).all()


def test_synth_deterministic_on_disk(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    synth_generate(6, 64, seed=9, out_dir=a)
    synth_generate(6, 64, seed=9, out_dir=b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) == 13
    assert all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
    index = load_index((a / "index.csv").read_text(), a)
    mem, _ = synth_generate(6, 64, seed=9)
    assert [r.annotations for r in index.records] == [
        tuple(read_labels(write_labels(r.annotations))) for r in mem.records
    ]
    assert format_index(index) == (a / "index.csv").read_text()
