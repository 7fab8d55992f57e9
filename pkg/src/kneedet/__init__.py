"""Single-stage knee-joint detection toolkit."""
from .geometry import Box, GIoUResult, NormBox, abs_to_norm, giou, giou_gradient, iou, norm_to_abs
from .data.schema import CLASS_NAMES
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CLASS_NAMES",
    "Box",
    "GIoUResult",
    "NormBox",
    "abs_to_norm",
    "giou",
    "giou_gradient",
    "iou",
    "norm_to_abs",
]
