"""Annotation/image ingestion, fold splitting and the synthetic corpus."""
from .index import DatasetIndex, ImageRecord, load_index
from .labels import read_labels, write_labels
from .pgm import read_pgm, write_pgm
from .schema import CLASS_NAMES, NUM_CLASSES
from .split import FoldAssignment, format_folds, kfold_split
from .synth import synth_generate

__all__ = [
    "CLASS_NAMES",
    "NUM_CLASSES",
    "DatasetIndex",
    "FoldAssignment",
    "ImageRecord",
    "format_folds",
    "kfold_split",
    "load_index",
    "read_labels",
    "read_pgm",
    "synth_generate",
    "write_labels",
    "write_pgm",
]
