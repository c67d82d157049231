"""Image manifests: the catalog of images with patient, label and
magnification attributes.

A manifest can be loaded from a CSV file (header
``image_id,patient_id,malignancy,magnification,pixel_source``) or scanned
from a BreaKHis-style directory tree where the top-level directory names
the malignancy, a ``40X``-style directory names the magnification, and the
filename encodes the slide (= patient) identity.
"""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from histocase.errors import (
    DuplicateImageId,
    MissingColumn,
    UnknownLabel,
    UnreadablePath,
)

CSV_COLUMNS = ["image_id", "patient_id", "malignancy", "magnification", "pixel_source"]
# native_width / native_height are optional extra columns
OPTIONAL_COLUMNS = ["native_width", "native_height"]

_MAG_DIR_RE = re.compile(r"^(\d+)\s*x?$", re.IGNORECASE)
# BreaKHis filename grammar, e.g. SOB_B_A-14-22549AB-40-001.png:
# <method>_<class>_<subtype>-<year>-<slide>-<magnification>-<sequence>
_BREAKHIS_NAME_RE = re.compile(
    r"^[^-]+-(?P<slide>.+)-(?P<mag>\d+)-(?P<seq>\d+)$"
)


@dataclass(frozen=True)
class ImageRecord:
    """One catalogued image."""

    image_id: str
    patient_id: str
    malignancy: str
    magnification: int
    pixel_source: str
    native_width: int = 0
    native_height: int = 0


@dataclass
class Manifest:
    """Validated catalog of images plus the declared label/magnification sets."""

    records: list[ImageRecord]
    label_set: tuple[str, ...]
    magnification_set: tuple[int, ...]
    source_fingerprint: str = ""

    def __post_init__(self):
        if not self.source_fingerprint:
            self.source_fingerprint = fingerprint_records(self.records)

    @property
    def patients(self) -> list[str]:
        return sorted({r.patient_id for r in self.records})

    def cell(self, malignancy: str, magnification: int) -> list[ImageRecord]:
        """Images in one (malignancy, magnification) cell, id-sorted."""
        out = [
            r
            for r in self.records
            if r.malignancy == malignancy and r.magnification == magnification
        ]
        out.sort(key=lambda r: r.image_id)
        return out

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}

    def restrict_patients(self, patients: Iterable[str]) -> "Manifest":
        keep = set(patients)
        return Manifest(
            records=[r for r in self.records if r.patient_id in keep],
            label_set=self.label_set,
            magnification_set=self.magnification_set,
        )

    def restrict_magnifications(self, magnifications: Sequence[int]) -> "Manifest":
        keep = tuple(sorted(magnifications))
        return Manifest(
            records=[r for r in self.records if r.magnification in keep],
            label_set=self.label_set,
            magnification_set=keep,
        )


def fingerprint_records(records: Iterable[ImageRecord]) -> str:
    """Content hash over the sorted records; independent of row order."""
    h = hashlib.sha256()
    for r in sorted(records, key=lambda r: r.image_id):
        h.update(
            f"{r.image_id}\x1f{r.patient_id}\x1f{r.malignancy}\x1f"
            f"{r.magnification}\x1f{r.pixel_source}\n".encode("utf-8")
        )
    return h.hexdigest()


def build_manifest(
    records: Sequence[ImageRecord],
    label_set: Sequence[str] | None = None,
    magnification_set: Sequence[int] | None = None,
) -> Manifest:
    """Validate records and assemble a Manifest.

    When ``label_set`` / ``magnification_set`` are omitted they are derived
    from the records (labels sorted, magnifications ascending); when given,
    any record outside the declared sets raises UnknownLabel.
    """
    seen: set[str] = set()
    for r in records:
        if r.image_id in seen:
            raise DuplicateImageId(f"duplicate image_id {r.image_id!r}")
        seen.add(r.image_id)

    labels = tuple(label_set) if label_set else tuple(sorted({r.malignancy for r in records}))
    mags = (
        tuple(sorted(int(m) for m in magnification_set))
        if magnification_set
        else tuple(sorted({r.magnification for r in records}))
    )
    for r in records:
        if r.malignancy not in labels:
            raise UnknownLabel(
                f"record {r.image_id!r}: malignancy {r.malignancy!r} not in {labels}"
            )
        if r.magnification not in mags:
            raise UnknownLabel(
                f"record {r.image_id!r}: magnification {r.magnification} not in {mags}"
            )
    return Manifest(records=list(records), label_set=labels, magnification_set=mags)


def load_manifest(
    path: str | Path,
    format: str = "csv",
    label_set: Sequence[str] | None = None,
    magnification_set: Sequence[int] | None = None,
) -> Manifest:
    """Load and validate a manifest from ``path``.

    ``format`` is ``"csv"`` or ``"breakhis_layout"``.
    """
    path = Path(path)
    if not path.exists():
        raise UnreadablePath(f"manifest source {path} does not exist")
    if format == "csv":
        records = _read_csv_records(path)
    elif format == "breakhis_layout":
        records = _scan_breakhis_tree(path)
    else:
        raise ValueError(f"unknown manifest format {format!r}")
    return build_manifest(records, label_set, magnification_set)


def _read_csv_records(path: Path) -> list[ImageRecord]:
    with path.open("r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"manifest CSV {path} missing columns {missing}")
        records = []
        for row in reader:
            records.append(
                ImageRecord(
                    image_id=row["image_id"],
                    patient_id=row["patient_id"],
                    malignancy=row["malignancy"],
                    magnification=int(row["magnification"]),
                    pixel_source=row["pixel_source"],
                    native_width=int(row.get("native_width") or 0),
                    native_height=int(row.get("native_height") or 0),
                )
            )
    return records


def parse_breakhis_filename(stem: str) -> str | None:
    """Extract the slide id (patient identity) from a BreaKHis filename stem."""
    m = _BREAKHIS_NAME_RE.match(stem)
    return m.group("slide") if m else None


def _scan_breakhis_tree(root: Path) -> list[ImageRecord]:
    """Walk a malignancy/.../magnification tree.

    The first path component under ``root`` is the malignancy (directory
    level is authoritative), the nearest ``40X``-style ancestor directory
    is the magnification, and the patient id comes from the filename's
    slide segment (falling back to the slide directory name).
    """
    if not root.is_dir():
        raise UnreadablePath(f"{root} is not a directory")
    records = []
    exts = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}
    for file in sorted(root.rglob("*")):
        if not file.is_file() or file.suffix.lower() not in exts:
            continue
        rel = file.relative_to(root)
        parts = rel.parts
        if len(parts) < 3:
            continue
        malignancy = parts[0].lower()
        magnification = None
        mag_index = None
        for i in range(len(parts) - 2, 0, -1):
            m = _MAG_DIR_RE.match(parts[i])
            if m:
                magnification = int(m.group(1))
                mag_index = i
                break
        if magnification is None:
            continue
        patient = parse_breakhis_filename(file.stem)
        if patient is None:
            # slide directory sits directly above the magnification level
            patient = parts[mag_index - 1]
        records.append(
            ImageRecord(
                image_id=file.stem,
                patient_id=patient,
                malignancy=malignancy,
                magnification=magnification,
                pixel_source=str(file),
            )
        )
    return records


def write_manifest_csv(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS + OPTIONAL_COLUMNS)
        for r in sorted(manifest.records, key=lambda r: r.image_id):
            writer.writerow(
                [
                    r.image_id,
                    r.patient_id,
                    r.malignancy,
                    r.magnification,
                    r.pixel_source,
                    r.native_width,
                    r.native_height,
                ]
            )
