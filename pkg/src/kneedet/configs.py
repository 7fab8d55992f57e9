"""Built-in network definitions."""
from __future__ import annotations

from typing import Sequence

from .data.schema import NUM_CLASSES

import numpy as np

from .data.index import DatasetIndex
from .postprocess import kmeans_anchors


# k-means (1 - IoU) over the glyph sizes of synth_generate(2000, 416, seed=0), sorted by area;
# three masks of three, smallest anchors on the finest grid
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = (
    (102.0, 124.0), (106.0, 136.0), (152.0, 105.0),
    (165.0, 109.0), (157.0, 120.0), (118.0, 160.0),
    (130.0, 157.0), (171.0, 165.0), (170.0, 177.0),
)
DEFAULT_MASKS = ((6, 7, 8), (3, 4, 5), (0, 1, 2))


def index_anchors(index: DatasetIndex, size: int, k: int = 3, seed: int = 0) -> list[tuple[float, float]]:
    """k-means anchors (pixels at ``size``) over every annotation in ``index``."""
    sizes = np.array([(b.w * size, b.h * size) for r in index.records for _, b in r.annotations], dtype=float)
    if len(sizes) < k:
        raise ValueError(f"need at least {k} annotations for {k} anchors, got {len(sizes)}")
    return kmeans_anchors(sizes, k, seed)


def toy_cfg(
    size: int = 128,
    anchors: Sequence[tuple[float, float]] = ((32.0, 32.0), (48.0, 32.0), (40.0, 48.0)),
    classes: int = NUM_CLASSES,
    channels: int = 1,
) -> str:
    """Seven leaky convs and a linear 1x1 head feeding one yolo layer on a ``size / 16`` grid."""
    anchor_text = ", ".join(f"{w:g},{h:g}" for w, h in anchors)
    convs = [(8, 3, 1), (16, 3, 2), (32, 3, 2), (32, 3, 2), (64, 3, 2), (64, 3, 1), (64, 3, 1)]
    parts = [f"[net]\nwidth={size}\nheight={size}\nchannels={channels}\n"]
    for filters, k, s in convs:
        parts.append(f"[convolutional]\nfilters={filters}\nsize={k}\nstride={s}\npad=1\nactivation=leaky\n")
    parts.append(f"[convolutional]\nfilters={len(anchors) * (5 + classes)}\nsize=1\nstride=1\npad=0\nactivation=linear\n")
    parts.append(f"[yolo]\nmask={','.join(str(i) for i in range(len(anchors)))}\nanchors={anchor_text}\nclasses={classes}\nnum={len(anchors)}\n")
    return "\n".join(parts)
