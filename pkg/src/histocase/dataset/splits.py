"""Patient-disjoint fold splits.

Splitting happens at the patient level so that no patient contributes
images to both the train and the test side of any fold.  An externally
supplied fold-definition JSON file can be used instead of re-randomizing,
to honor a dataset's published protocol.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from histocase.dataset.manifest import Manifest
from histocase.errors import ConfigError, TooFewPatients
from histocase.seeds import make_rng


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_patients: frozenset[str]
    test_patients: frozenset[str]
    seed: int


def split_folds(
    manifest: Manifest,
    n_folds: int,
    train_fraction: float,
    seed: int,
) -> list[FoldSplit]:
    """Randomized patient-level partitions, one per fold.

    The train side gets round(train_fraction * n_patients) patients
    (half up), and each fold reshuffles with a sub-seed derived from
    ``seed`` and the fold index, so the result is deterministic.
    """
    if n_folds < 1:
        raise ConfigError(f"n_folds must be >= 1, got {n_folds}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0,1), got {train_fraction}")
    patients = manifest.patients
    n = len(patients)
    if n < 2:
        raise TooFewPatients(f"need at least 2 patients, manifest has {n}")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train < 1 or n_train >= n:
        raise TooFewPatients(
            f"train_fraction {train_fraction} with {n} patients leaves an "
            f"empty train or test set"
        )
    folds = []
    for fold_index in range(1, n_folds + 1):
        rng = make_rng(seed, "split", fold_index)
        order = list(patients)
        perm = rng.permutation(n)
        shuffled = [order[i] for i in perm]
        folds.append(
            FoldSplit(
                fold_index=fold_index,
                train_patients=frozenset(shuffled[:n_train]),
                test_patients=frozenset(shuffled[n_train:]),
                seed=seed,
            )
        )
    return folds


def write_fold_definitions(folds: list[FoldSplit], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        str(f.fold_index): {
            "train": sorted(f.train_patients),
            "test": sorted(f.test_patients),
        }
        for f in folds
    }
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_fold_definitions(path: str | Path, manifest: Manifest) -> list[FoldSplit]:
    """Read a fold-definition JSON file and validate it against the manifest.

    Each fold must be a partition of the manifest's patients: disjoint
    train/test whose union covers every patient.
    """
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    all_patients = set(manifest.patients)
    folds = []
    for key in sorted(payload, key=lambda k: int(k)):
        entry = payload[key]
        train = set(entry["train"])
        test = set(entry["test"])
        if train & test:
            raise ConfigError(
                f"fold {key}: patients {sorted(train & test)} appear on both sides"
            )
        if train | test != all_patients:
            missing = sorted(all_patients - (train | test))
            extra = sorted((train | test) - all_patients)
            raise ConfigError(
                f"fold {key}: not a partition of the manifest's patients "
                f"(missing {missing}, unknown {extra})"
            )
        if not train or not test:
            raise TooFewPatients(f"fold {key}: empty train or test side")
        folds.append(
            FoldSplit(
                fold_index=int(key),
                train_patients=frozenset(train),
                test_patients=frozenset(test),
                seed=-1,
            )
        )
    return folds
