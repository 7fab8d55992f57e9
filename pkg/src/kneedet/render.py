"""Box overlays on grayscale images, written as binary PPM."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .geometry import Box

# one fixed RGB color per class id
CLASS_COLORS = ((255, 0, 0), (0, 200, 0), (0, 90, 255), (255, 200, 0))


def gray_to_rgb(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    """``(H, W)`` integer samples to an 8-bit ``(H, W, 3)`` array."""
    img = np.asarray(img, dtype=np.int64)
    if maxval != 255:
        img = (img * 255 + maxval // 2) // maxval
    return np.repeat(img.astype(np.uint8)[:, :, None], 3, axis=2)


def _pixel_span(lo: float, hi: float, n: int) -> tuple[int, int] | None:
    a = max(int(np.floor(lo)), 0)
    b = min(int(np.ceil(hi)) - 1, n - 1)
    if b < 0 or a > n - 1:
        return None
    return min(a, n - 1), max(b, 0)


def draw_boxes(rgb: np.ndarray, boxes: Iterable[tuple[int, Box]]) -> np.ndarray:
    """One-pixel outlines in class colors; boxes are clamped to the image."""
    out = rgb.copy()
    h, w = out.shape[:2]
    for cls, box in boxes:
        xs = _pixel_span(box.x1, box.x2, w)
        ys = _pixel_span(box.y1, box.y2, h)
        if xs is None or ys is None:
            continue
        (x1, x2), (y1, y2) = xs, ys
        color = CLASS_COLORS[cls % len(CLASS_COLORS)]
        out[y1, x1 : x2 + 1] = color
        out[y2, x1 : x2 + 1] = color
        out[y1 : y2 + 1, x1] = color
        out[y1 : y2 + 1, x2] = color
    return out


def write_ppm(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def render_overlay(img: np.ndarray, maxval: int, boxes: Iterable[tuple[int, Box]]) -> bytes:
    return write_ppm(draw_boxes(gray_to_rgb(img, maxval), boxes))
