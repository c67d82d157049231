"""Multi-magnification case construction.

A case is an ordered tuple of image ids, exactly one per magnification in
ascending magnification order, all sharing one malignancy label.  Training
case sets mix images across patients within a label and are exactly
balanced across labels; evaluation case sets are built per patient from
that patient's images only.

Generation is rejection sampling: draw one image uniformly at random from
each (label, magnification) cell, retry whenever the resulting tuple was
already produced.  A feasibility precheck (the product of cell sizes)
plus a retry cap replace the otherwise unbounded retry loop.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from histocase.dataset.manifest import Manifest
from histocase.errors import (
    EmptyCell,
    InfeasibleK,
    NotMultiple,
    PatientMissingMagnification,
    RetryLimitExceeded,
)
from histocase.seeds import derive_seed, make_rng

# rejection draws allowed per requested case before declaring an internal error
RETRY_FACTOR = 100


@dataclass(frozen=True)
class Case:
    """Image-id tuple in ascending magnification order plus its label."""

    images: tuple[str, ...]
    label: str
    patient_id: str | None = None


@dataclass
class CaseSet:
    cases: list[Case]
    k: int
    seed: int
    manifest_fingerprint: str
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.cases)

    def labels(self) -> list[str]:
        return [c.label for c in self.cases]


@dataclass
class PatientCaseSets:
    """Per-patient case sets plus generation diagnostics.

    ``truncated`` maps patients whose distinct-combination count fell short
    of the request to the count actually produced; ``skipped`` maps
    patients missing a magnification to the magnifications they lack.
    """

    case_sets: dict[str, CaseSet] = field(default_factory=dict)
    truncated: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, list[int]] = field(default_factory=dict)

    def all_cases(self) -> list[Case]:
        out = []
        for patient in sorted(self.case_sets):
            out.extend(self.case_sets[patient].cases)
        return out


def count_distinct_combinations(manifest: Manifest, label: str) -> int:
    """Number of distinct cases available for ``label``.

    Product over magnifications of the (label, magnification) cell sizes.
    Raises EmptyCell if any magnification has no image for the label.
    """
    if label not in manifest.label_set:
        raise ValueError(f"label {label!r} not in manifest label set {manifest.label_set}")
    sizes = []
    empty = []
    for mag in manifest.magnification_set:
        n = len(manifest.cell(label, mag))
        sizes.append(n)
        if n == 0:
            empty.append(mag)
    if empty:
        raise EmptyCell(label, empty)
    total = 1
    for n in sizes:
        total *= n
    return total


def _sample_label_cases(
    manifest: Manifest,
    label: str,
    count: int,
    seed: int,
    patient_id: str | None = None,
) -> list[Case]:
    """Draw ``count`` distinct cases for one label by rejection sampling."""
    cells = [
        [r.image_id for r in manifest.cell(label, mag)]
        for mag in manifest.magnification_set
    ]
    rng = make_rng(seed)
    seen: set[tuple[str, ...]] = set()
    cases: list[Case] = []
    draws = 0
    cap = RETRY_FACTOR * max(count, 1)
    while len(cases) < count:
        if draws >= cap:
            raise RetryLimitExceeded(
                f"label {label!r}: {draws} draws produced only "
                f"{len(cases)}/{count} distinct cases"
            )
        draws += 1
        combo = tuple(cell[rng.integers(len(cell))] for cell in cells)
        if combo in seen:
            continue
        seen.add(combo)
        cases.append(Case(images=combo, label=label, patient_id=patient_id))
    return cases


def build_case_set(manifest: Manifest, k: int, seed: int) -> CaseSet:
    """Balanced, duplicate-free case set of size ``k`` across all labels.

    ``k`` must be a multiple of the number of labels and each label must
    offer at least k/|labels| distinct combinations; both are checked
    before any sampling.  Cases carry no patient id: training cases mix
    patients freely within a label.  Per-label sampling uses independent
    sub-seeds derived from ``seed``, merged in label order.
    """
    if k <= 0:
        raise NotMultiple(f"k must be positive, got {k}")
    labels = manifest.label_set
    if k % len(labels) != 0:
        raise NotMultiple(f"k={k} is not a multiple of the {len(labels)} labels")
    per_label = k // len(labels)
    for label in labels:
        available = count_distinct_combinations(manifest, label)
        if available < per_label:
            raise InfeasibleK(
                f"label {label!r} offers {available} distinct combinations, "
                f"but k={k} needs {per_label} per label"
            )
    cases: list[Case] = []
    for label in labels:
        cases.extend(
            _sample_label_cases(
                manifest, label, per_label, derive_seed(seed, "cases", label)
            )
        )
    return CaseSet(
        cases=cases,
        k=k,
        seed=seed,
        manifest_fingerprint=manifest.source_fingerprint,
    )


def build_patient_case_sets(
    manifest: Manifest,
    patients: set[str] | list[str],
    k_per_patient: int,
    seed: int,
) -> PatientCaseSets:
    """Patient-specific case sets: the sampler restricted to one patient.

    Each patient's images share a single label, so the balance rule is
    waived and the set holds k_per_patient cases of that label.  Patients
    lacking a magnification are reported in ``skipped``; patients with
    fewer than k_per_patient distinct combinations get all of them and are
    reported in ``truncated``.
    """
    if k_per_patient < 1:
        raise ValueError(f"k_per_patient must be >= 1, got {k_per_patient}")
    result = PatientCaseSets()
    for patient in sorted(set(patients)):
        sub = manifest.restrict_patients([patient])
        if not sub.records:
            result.skipped[patient] = list(manifest.magnification_set)
            continue
        label = sub.records[0].malignancy
        try:
            available = count_distinct_combinations(sub, label)
        except EmptyCell as exc:
            result.skipped[patient] = exc.magnifications
            continue
        sub_seed = derive_seed(seed, "patient", patient)
        if available <= k_per_patient:
            # rejection sampling degenerates to coupon collecting here:
            # enumerate every combination and shuffle for a uniform order
            cells = [
                [r.image_id for r in sub.cell(label, mag)]
                for mag in sub.magnification_set
            ]
            combos = list(itertools.product(*cells))
            rng = make_rng(sub_seed)
            order = rng.permutation(len(combos))
            cases = [
                Case(images=tuple(combos[i]), label=label, patient_id=patient)
                for i in order
            ]
            truncated = available < k_per_patient
            if truncated:
                result.truncated[patient] = available
        else:
            cases = _sample_label_cases(sub, label, k_per_patient, sub_seed, patient)
            truncated = False
        result.case_sets[patient] = CaseSet(
            cases=cases,
            k=len(cases),
            seed=seed,
            manifest_fingerprint=manifest.source_fingerprint,
            truncated=truncated,
        )
    return result


def check_missing_magnifications(
    manifest: Manifest, patients: set[str] | list[str]
) -> None:
    """Raise for the first patient lacking images at some magnification."""
    for patient in sorted(set(patients)):
        sub = manifest.restrict_patients([patient])
        present = {r.magnification for r in sub.records}
        missing = [m for m in manifest.magnification_set if m not in present]
        if missing:
            raise PatientMissingMagnification(patient, missing)


def apportion(total: int, n_parts: int) -> list[int]:
    """Split ``total`` as equally as possible; remainder goes to the
    earliest parts (callers pass patients in sorted order)."""
    if n_parts < 1:
        raise ValueError("n_parts must be >= 1")
    base, rem = divmod(total, n_parts)
    return [base + 1 if i < rem else base for i in range(n_parts)]


def write_case_set_jsonl(case_set: CaseSet, path: str | Path) -> None:
    """One case per line, preceded by a header line with k / seed / fingerprint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        header = {
            "k": case_set.k,
            "seed": case_set.seed,
            "manifest_fingerprint": case_set.manifest_fingerprint,
            "truncated": case_set.truncated,
        }
        f.write(json.dumps(header) + "\n")
        for case in case_set.cases:
            f.write(
                json.dumps(
                    {
                        "label": case.label,
                        "patient_id": case.patient_id,
                        "images": list(case.images),
                    }
                )
                + "\n"
            )


def read_case_set_jsonl(path: str | Path) -> CaseSet:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        header = json.loads(f.readline())
        cases = []
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            cases.append(
                Case(
                    images=tuple(obj["images"]),
                    label=obj["label"],
                    patient_id=obj.get("patient_id"),
                )
            )
    return CaseSet(
        cases=cases,
        k=header["k"],
        seed=header["seed"],
        manifest_fingerprint=header["manifest_fingerprint"],
        truncated=header.get("truncated", False),
    )
