"""Pixel preprocessing: decode, bilinear resize, scale to [0, 1].

Preprocessing is a pure function of the raster bytes and the target size,
so images may be processed in parallel; ImageStore adds a read-through
cache keyed by image_id.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from histocase.dataset.manifest import ImageRecord, Manifest
from histocase.errors import ChannelMismatch, DecodeFailure


def preprocess_image(
    record: ImageRecord,
    target: tuple[int, int] = (100, 100),
    root: str | Path | None = None,
) -> np.ndarray:
    """Decode ``record.pixel_source``, resize and normalize.

    Returns a float64 array of shape (target_h, target_w, 3) with values
    in [0, 1].  Non-RGB inputs raise ChannelMismatch; unreadable or
    corrupt files raise DecodeFailure.
    """
    path = Path(record.pixel_source)
    if root is not None and not path.is_absolute():
        path = Path(root) / path
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode != "RGB":
                raise ChannelMismatch(
                    f"{path}: expected 3-channel RGB input, got mode {mode!r}"
                )
            target_h, target_w = target
            if img.size != (target_w, target_h):
                img = img.resize((target_w, target_h), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except ChannelMismatch:
        raise
    except Exception as exc:
        raise DecodeFailure(f"cannot decode {path}: {exc}") from exc
    return arr


class ImageStore:
    """Read-through cache of preprocessed images for one manifest.

    Arrays are cached as float32 to halve memory; ``get`` returns float64
    views ready for the network.
    """

    def __init__(
        self,
        manifest: Manifest,
        target: tuple[int, int] = (100, 100),
        root: str | Path | None = None,
    ):
        self.manifest = manifest
        self.target = tuple(target)
        self.root = root
        self._records = manifest.by_id()
        self._cache: dict[str, np.ndarray] = {}

    def get(self, image_id: str) -> np.ndarray:
        cached = self._cache.get(image_id)
        if cached is None:
            record = self._records[image_id]
            arr = preprocess_image(record, self.target, self.root)
            cached = arr.astype(np.float32)
            self._cache[image_id] = cached
        return cached.astype(np.float64)

    def warm(self, image_ids=None) -> None:
        """Eagerly decode everything (or the given ids) into the cache."""
        ids = sorted(self._records) if image_ids is None else image_ids
        for image_id in ids:
            self.get(image_id)
