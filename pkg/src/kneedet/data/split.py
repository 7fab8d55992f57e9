"""Patient-grouped, gender-stratified k-fold assignment."""
from __future__ import annotations

import random
import warnings
from collections import defaultdict
from dataclasses import dataclass

from .index import GENDERS, DatasetIndex


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    folds: dict[str, int]  # image_path -> fold id
    patients: tuple[frozenset[str], ...]  # per-fold patient ids

    def images_in(self, fold: int) -> list[str]:
        return [p for p, f in self.folds.items() if f == fold]

    def sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.folds.values():
            sizes[f] += 1
        return sizes


def kfold_split(index: DatasetIndex, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Split each gender stratum independently, then merge fold-by-fold.

    Within a stratum, patients are placed largest-first into the fold that
    currently holds the fewest of that stratum's images (then fewest images
    overall, then lowest id). The seed only orders patients of equal size.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(index) == 0:
        raise ValueError("cannot split an empty index")
    rng = random.Random(seed)
    by_patient: dict[tuple[str, str], list[str]] = defaultdict(list)
    patient_gender: dict[str, str] = {}
    for r in index.records:
        prior = patient_gender.setdefault(r.patient_id, r.gender)
        if prior != r.gender:
            raise ValueError(f"patient {r.patient_id!r} has inconsistent gender ({prior} vs {r.gender})")
        by_patient[(r.gender, r.patient_id)].append(r.image_path)

    folds: dict[str, int] = {}
    patients: list[set[str]] = [set() for _ in range(k)]
    total = [0] * k
    for gender in GENDERS:
        members = sorted(pid for g, pid in by_patient if g == gender)
        if not members:
            continue
        if len(members) < k:
            warnings.warn(f"stratum {gender!r} has {len(members)} patients for {k} folds", stacklevel=2)
        rng.shuffle(members)
        members.sort(key=lambda pid: -len(by_patient[(gender, pid)]))  # stable: shuffle breaks ties
        stratum = [0] * k
        for pid in members:
            images = by_patient[(gender, pid)]
            f = min(range(k), key=lambda i: (stratum[i], total[i], i))
            for path in images:
                folds[path] = f
            stratum[f] += len(images)
            total[f] += len(images)
            patients[f].add(pid)
    ordered = {r.image_path: folds[r.image_path] for r in index.records}
    return FoldAssignment(k, ordered, tuple(frozenset(p) for p in patients))


def format_folds(assignment: FoldAssignment) -> str:
    return "image_path,fold\n" + "".join(f"{p},{f}\n" for p, f in assignment.folds.items())
