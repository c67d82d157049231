"""Image catalogs, patient-disjoint splits, preprocessing, synthetic corpora."""

from histocase.dataset.manifest import (
    ImageRecord,
    Manifest,
    load_manifest,
    write_manifest_csv,
)
from histocase.dataset.splits import (
    FoldSplit,
    load_fold_definitions,
    split_folds,
    write_fold_definitions,
)
from histocase.dataset.preprocess import ImageStore, preprocess_image
from histocase.dataset.synthetic import SignalSpec, generate_synthetic_manifest

__all__ = [
    "ImageRecord",
    "Manifest",
    "load_manifest",
    "write_manifest_csv",
    "FoldSplit",
    "split_folds",
    "load_fold_definitions",
    "write_fold_definitions",
    "ImageStore",
    "preprocess_image",
    "SignalSpec",
    "generate_synthetic_manifest",
]
