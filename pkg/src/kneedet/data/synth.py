"""Procedural stand-in corpus: grayscale images with class-coded glyphs.

Every glyph has a bright 2-pixel outline exactly on its ground-truth box, so
the emitted labels are exact to the pixel. Interiors encode the class:
solid fill, hollow, vertical stripes, checkerboard.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..geometry import NormBox
from .index import DatasetIndex, ImageRecord, format_index
from .labels import write_labels
from .pgm import write_pgm
from .schema import NUM_CLASSES

OUTLINE = 230
BORDER = 2
BACKGROUND_MAX = 60
MIN_IMAGE_SIZE = 32


# nominal (w, h) per class as a fraction of the image side; each view has its own typical shape
CLASS_SHAPES = ((0.30, 0.38), (0.38, 0.27), (0.25, 0.31), (0.41, 0.41))
SIZE_JITTER = 0.03


def glyph_size(rng: np.random.Generator, cls: int, size: int) -> tuple[int, int]:
    fw, fh = CLASS_SHAPES[cls]
    jw, jh = rng.uniform(-SIZE_JITTER, SIZE_JITTER, size=2)
    return max(8, int(round((fw + jw) * size))), max(8, int(round((fh + jh) * size)))


def draw_glyph(img: np.ndarray, cls: int, x1: int, y1: int, x2: int, y2: int) -> None:
    region = img[y1:y2, x1:x2]
    h, w = region.shape
    yy, xx = np.mgrid[0:h, 0:w]
    if cls == 0:
        region[:] = 160
    elif cls == 2:
        region[(xx // 3) % 2 == 0] = 200
    elif cls == 3:
        region[((xx // 4) + (yy // 4)) % 2 == 0] = 190
    region[:BORDER, :] = OUTLINE
    region[-BORDER:, :] = OUTLINE
    region[:, :BORDER] = OUTLINE
    region[:, -BORDER:] = OUTLINE


def render_image(rng: np.random.Generator, size: int) -> tuple[np.ndarray, list[tuple[int, tuple[int, int, int, int]]]]:
    img = rng.integers(0, BACKGROUND_MAX // 2, size=(size, size)).astype(np.int64)
    ramp = np.linspace(0, BACKGROUND_MAX // 2, size).astype(np.int64)
    img += ramp[None, :] if rng.random() < 0.5 else ramp[:, None]
    n_glyphs = 1 + int(rng.random() < 0.5)
    placed: list[tuple[int, tuple[int, int, int, int]]] = []
    for _ in range(n_glyphs):
        cls = int(rng.integers(0, NUM_CLASSES))
        for _attempt in range(50):
            gw, gh = glyph_size(rng, cls, size)
            x1 = int(rng.integers(0, size - gw + 1))
            y1 = int(rng.integers(0, size - gh + 1))
            box = (x1, y1, x1 + gw, y1 + gh)
            # keep a one-pixel gap so outlines never touch
            if all(
                box[0] > b[2] or b[0] > box[2] or box[1] > b[3] or b[1] > box[3] for _, b in placed
            ):
                placed.append((cls, box))
                break
    for cls, box in placed:
        draw_glyph(img, cls, *box)
    return img, placed


def synth_generate(n_images: int, size: int = 128, seed: int = 0, out_dir: str | Path | None = None):
    """Generate ``n_images`` square images of side ``size``.

    Returns ``(index, images)`` where ``images`` maps each record's image path
    to its ``(size, size)`` integer array. Two consecutive images share a
    patient; patient genders alternate F, M. With ``out_dir`` the PGM images,
    label files and ``index.csv`` are written there.
    """
    if size < MIN_IMAGE_SIZE:
        raise InvalidInputError(f"image size {size} is too small for glyphs (minimum {MIN_IMAGE_SIZE})")
    if n_images < 0:
        raise InvalidInputError("n_images must be >= 0")
    rng = np.random.default_rng(seed)
    records = []
    images: dict[str, np.ndarray] = {}
    for n in range(n_images):
        img, placed = render_image(rng, size)
        patient = n // 2
        anns = tuple(
            (cls, NormBox((x1 + x2) / 2 / size, (y1 + y2) / 2 / size, (x2 - x1) / size, (y2 - y1) / size))
            for cls, (x1, y1, x2, y2) in placed
        )
        name = f"img_{n:05d}"
        rec = ImageRecord(
            f"images/{name}.pgm", f"P{patient:05d}", "F" if patient % 2 == 0 else "M", anns, f"labels/{name}.txt"
        )
        records.append(rec)
        images[rec.image_path] = img
    base = Path(out_dir) if out_dir is not None else None
    index = DatasetIndex(tuple(records), base)
    if base is not None:
        (base / "images").mkdir(parents=True, exist_ok=True)
        (base / "labels").mkdir(parents=True, exist_ok=True)
        for rec in records:
            (base / rec.image_path).write_bytes(write_pgm(images[rec.image_path]))
            (base / rec.label_path).write_text(write_labels(rec.annotations))
        (base / "index.csv").write_text(format_index(index))
    return index, images
