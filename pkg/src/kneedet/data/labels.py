"""YOLO label files: one ``class_id cx cy w h`` object per line, normalized."""
from __future__ import annotations

from ..errors import InvalidInputError, ParseError
from ..geometry import NormBox
from .schema import NUM_CLASSES


def read_labels(text: str, num_classes: int = NUM_CLASSES) -> list[tuple[int, NormBox]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"malformed label {raw.strip()!r}", lineno) from None
        if not 0 <= cls < num_classes:
            raise ParseError(f"class id {cls} outside 0..{num_classes - 1}", lineno)
        try:
            out.append((cls, NormBox(cx, cy, w, h)))
        except InvalidInputError as exc:
            raise ParseError(str(exc), lineno) from None
    return out


def write_labels(annotations) -> str:
    return "".join(f"{c} {b.cx:.6g} {b.cy:.6g} {b.w:.6g} {b.h:.6g}\n" for c, b in annotations)
