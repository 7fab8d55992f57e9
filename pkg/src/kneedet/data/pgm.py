"""Netpbm grayscale (P2 plain / P5 binary) images."""
from __future__ import annotations

import numpy as np

from ..errors import ParseError


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping ``#`` comments."""
    vals = []
    pos = 0
    while len(vals) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        try:
            vals.append(int(data[start:pos]))
        except ValueError:
            raise ParseError(f"bad PGM header token {data[start:pos]!r}") from None
    return vals, pos


def read_pgm_raw(data: bytes) -> tuple[np.ndarray, int]:
    """Return the integer image ``(H, W)`` and its maxval."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a PGM file (magic {magic!r})")
    (width, height, maxval), pos = _tokens(data[2:], 3)
    pos += 2
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise ParseError(f"invalid PGM dimensions {width}x{height} maxval {maxval}")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = data[pos : pos + n * dtype.itemsize]
        if len(body) < n * dtype.itemsize:
            raise ParseError(f"PGM payload truncated: {len(body)} of {n * dtype.itemsize} bytes")
        img = np.frombuffer(body, dtype=dtype).astype(np.int64)
    else:
        try:
            img = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise ParseError("non-integer sample in plain PGM") from None
        if img.size < n:
            raise ParseError(f"PGM payload truncated: {img.size} of {n} samples")
        img = img[:n]
    if img.max(initial=0) > maxval:
        raise ParseError("sample exceeds maxval")
    return img.reshape(height, width), maxval


def read_pgm(data: bytes) -> np.ndarray:
    """Decode to a ``(1, H, W)`` float tensor scaled to [0, 1]."""
    img, maxval = read_pgm_raw(data)
    return (img.astype(np.float64) / maxval)[None]


def write_pgm(img: np.ndarray, maxval: int = 255, plain: bool = False) -> bytes:
    img = np.asarray(img)
    h, w = img.shape
    if plain:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in img)
        return f"P2\n{w} {h}\n{maxval}\n{rows}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + img.astype(dtype).tobytes()
