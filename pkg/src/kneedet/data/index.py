"""Dataset index CSV: ``image_path,patient_id,gender,label_path``."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from ..errors import MissingFileError, ParseError
from ..geometry import NormBox
from .labels import read_labels
from .schema import NUM_CLASSES

GENDERS = ("F", "M", "unknown")
HEADER = ["image_path", "patient_id", "gender", "label_path"]


@dataclass(frozen=True)
class ImageRecord:
    image_path: str
    patient_id: str
    gender: str
    annotations: tuple[tuple[int, NormBox], ...]
    label_path: str = ""


@dataclass(frozen=True)
class DatasetIndex:
    records: tuple[ImageRecord, ...] = ()
    base_dir: Path | None = None

    @property
    def class_counts(self) -> tuple[int, ...]:
        counts = [0] * NUM_CLASSES
        for r in self.records:
            for c, _ in r.annotations:
                counts[c] += 1
        return tuple(counts)

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if self.base_dir is not None and not p.is_absolute():
            p = self.base_dir / p
        return p


def load_index(text: str, base_dir: str | Path | None = None, check_images: bool = True) -> DatasetIndex:
    """Parse an index CSV; label files are read and validated relative to ``base_dir``."""
    base = Path(base_dir) if base_dir is not None else None
    if not text.strip():
        return DatasetIndex((), base)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != HEADER:
        raise ParseError(f"index header must be {','.join(HEADER)}, got {','.join(header)}", 1)
    records = []
    seen: set[str] = set()
    resolve = DatasetIndex((), base).resolve
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(f.strip() for f in row):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, got {len(row)}", lineno)
        image_path, patient_id, gender, label_path = (f.strip() for f in row)
        if not image_path or not patient_id or not label_path:
            raise ParseError("empty field", lineno)
        if gender not in GENDERS:
            raise ParseError(f"gender must be one of {GENDERS}, got {gender!r}", lineno)
        if image_path in seen:
            raise ParseError(f"duplicate image_path {image_path!r}", lineno)
        seen.add(image_path)
        if check_images and not resolve(image_path).is_file():
            raise MissingFileError(f"image file not found: {resolve(image_path)}")
        lp = resolve(label_path)
        if not lp.is_file():
            raise MissingFileError(f"label file not found: {lp}")
        try:
            anns = read_labels(lp.read_text())
        except ParseError as exc:
            raise ParseError(f"{lp}: {exc}") from None
        records.append(ImageRecord(image_path, patient_id, gender, tuple(anns), label_path))
    return DatasetIndex(tuple(records), base)


def format_index(index: DatasetIndex) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in index.records:
        w.writerow([r.image_path, r.patient_id, r.gender, r.label_path])
    return buf.getvalue()
