"""Case-, patient- and diagnosis-level evaluation metrics.

Three accuracy notions over per-case predictions joined to patient ids:

* case recognition rate: correctly classified cases / all cases
* patient recognition rate: mean over patients of each patient's own
  per-case accuracy
* diagnosis accuracy: each patient is voted benign iff the fraction of
  their cases *predicted* benign strictly exceeds ``malignancy_threshold``
  (otherwise malignant); the accuracy is the fraction of patients whose
  voted diagnosis matches their ground truth.

"Positive" means malignant throughout.  The headline false positive /
negative rates divide by the total patient count; the class-conditional
rates are also reported, clearly named.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from histocase.errors import EmptyInput, InconsistentTruth

DEFAULT_MALIGNANCY_THRESHOLD = 0.5


@dataclass(frozen=True)
class PredictionRecord:
    case_ref: str
    patient_id: str
    true_label: str
    predicted_label: str

    @property
    def correct(self) -> bool:
        return self.true_label == self.predicted_label


@dataclass
class PatientDiagnosis:
    patient_id: str
    diagnosis: str
    true_label: str
    n_cases: int
    n_predicted_benign: int

    @property
    def correct(self) -> bool:
        return self.diagnosis == self.true_label


@dataclass
class ConfusionSummary:
    """Patient-level diagnosis confusion counts (positive = malignant)."""

    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int
    false_positive_rate: float      # FP / all patients
    false_negative_rate: float      # FN / all patients
    fpr_among_benign: float         # FP / (FP + TN), 0 when no benign patients
    fnr_among_malignant: float      # FN / (FN + TP), 0 when no malignant patients

    @property
    def total(self) -> int:
        return (self.true_positive + self.false_positive
                + self.true_negative + self.false_negative)


@dataclass
class EvaluationReport:
    case_rate: float
    patient_rate: float
    diagnosis_accuracy: float
    per_patient_diagnosis: dict[str, PatientDiagnosis]
    confusion: ConfusionSummary
    malignancy_threshold: float
    n_cases: int
    n_patients: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_patient_diagnosis"] = {
            p: asdict(v) | {"correct": v.correct}
            for p, v in self.per_patient_diagnosis.items()
        }
        return d


def _require_nonempty(preds: Sequence[PredictionRecord]) -> None:
    if not preds:
        raise EmptyInput("no prediction records")


def _by_patient(preds: Iterable[PredictionRecord]) -> dict[str, list[PredictionRecord]]:
    groups: dict[str, list[PredictionRecord]] = {}
    for p in preds:
        groups.setdefault(p.patient_id, []).append(p)
    return groups


def case_recognition_rate(preds: Sequence[PredictionRecord]) -> float:
    _require_nonempty(preds)
    return sum(p.correct for p in preds) / len(preds)


def patient_recognition_rate(preds: Sequence[PredictionRecord]) -> float:
    _require_nonempty(preds)
    groups = _by_patient(preds)
    per_patient = [
        sum(p.correct for p in group) / len(group) for group in groups.values()
    ]
    return sum(per_patient) / len(per_patient)


def patient_diagnosis(
    preds: Sequence[PredictionRecord],
    malignancy_threshold: float = DEFAULT_MALIGNANCY_THRESHOLD,
    benign_label: str = "benign",
    malignant_label: str = "malignant",
) -> str:
    """Vote one patient's diagnosis from their predicted case labels.

    Benign iff n_predicted_benign / n_cases strictly exceeds the
    threshold; ties at the threshold go malignant.
    """
    _require_nonempty(preds)
    patients = {p.patient_id for p in preds}
    if len(patients) != 1:
        raise ValueError(f"expected a single patient, got {sorted(patients)}")
    n_benign = sum(p.predicted_label == benign_label for p in preds)
    if n_benign / len(preds) > malignancy_threshold:
        return benign_label
    return malignant_label


def diagnosis_accuracy(
    preds: Sequence[PredictionRecord],
    malignancy_threshold: float = DEFAULT_MALIGNANCY_THRESHOLD,
    benign_label: str = "benign",
    malignant_label: str = "malignant",
) -> tuple[float, dict[str, PatientDiagnosis]]:
    """Fraction of patients whose voted diagnosis matches their truth."""
    _require_nonempty(preds)
    groups = _by_patient(preds)
    detail: dict[str, PatientDiagnosis] = {}
    correct = 0
    for patient in sorted(groups):
        group = groups[patient]
        truths = {p.true_label for p in group}
        if len(truths) != 1:
            raise InconsistentTruth(
                f"patient {patient!r} has conflicting true labels {sorted(truths)}"
            )
        diagnosis = patient_diagnosis(
            group, malignancy_threshold, benign_label, malignant_label)
        entry = PatientDiagnosis(
            patient_id=patient,
            diagnosis=diagnosis,
            true_label=group[0].true_label,
            n_cases=len(group),
            n_predicted_benign=sum(p.predicted_label == benign_label for p in group),
        )
        detail[patient] = entry
        correct += entry.correct
    return correct / len(groups), detail


def confusion_summary(
    detail: dict[str, PatientDiagnosis],
    benign_label: str = "benign",
    malignant_label: str = "malignant",
) -> ConfusionSummary:
    tp = fp = tn = fn = 0
    for entry in detail.values():
        if entry.diagnosis == malignant_label:
            if entry.true_label == malignant_label:
                tp += 1
            else:
                fp += 1
        else:
            if entry.true_label == benign_label:
                tn += 1
            else:
                fn += 1
    total = tp + fp + tn + fn
    return ConfusionSummary(
        true_positive=tp,
        false_positive=fp,
        true_negative=tn,
        false_negative=fn,
        false_positive_rate=fp / total if total else 0.0,
        false_negative_rate=fn / total if total else 0.0,
        fpr_among_benign=fp / (fp + tn) if (fp + tn) else 0.0,
        fnr_among_malignant=fn / (fn + tp) if (fn + tp) else 0.0,
    )


def evaluate(
    preds: Sequence[PredictionRecord],
    malignancy_threshold: float = DEFAULT_MALIGNANCY_THRESHOLD,
    benign_label: str = "benign",
    malignant_label: str = "malignant",
) -> EvaluationReport:
    _require_nonempty(preds)
    diag_acc, detail = diagnosis_accuracy(
        preds, malignancy_threshold, benign_label, malignant_label)
    return EvaluationReport(
        case_rate=case_recognition_rate(preds),
        patient_rate=patient_recognition_rate(preds),
        diagnosis_accuracy=diag_acc,
        per_patient_diagnosis=detail,
        confusion=confusion_summary(detail, benign_label, malignant_label),
        malignancy_threshold=malignancy_threshold,
        n_cases=len(preds),
        n_patients=len(detail),
    )


def threshold_sweep(
    preds: Sequence[PredictionRecord],
    thresholds: Sequence[float],
    benign_label: str = "benign",
    malignant_label: str = "malignant",
) -> list[dict]:
    """Diagnosis accuracy and confusion counts at each threshold."""
    rows = []
    for threshold in thresholds:
        acc, detail = diagnosis_accuracy(preds, threshold, benign_label, malignant_label)
        conf = confusion_summary(detail, benign_label, malignant_label)
        rows.append(
            {
                "malignancy_threshold": threshold,
                "diagnosis_accuracy": acc,
                "false_positive": conf.false_positive,
                "false_negative": conf.false_negative,
            }
        )
    return rows


# -- prediction / report files -------------------------------------------

PREDICTIONS_COLUMNS = ["case_ref", "patient_id", "true_label", "predicted_label"]


def write_predictions_csv(preds: Sequence[PredictionRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(PREDICTIONS_COLUMNS)
        for p in preds:
            writer.writerow([p.case_ref, p.patient_id, p.true_label, p.predicted_label])


def read_predictions_csv(path: str | Path) -> list[PredictionRecord]:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return [
            PredictionRecord(
                case_ref=row["case_ref"],
                patient_id=row["patient_id"],
                true_label=row["true_label"],
                predicted_label=row["predicted_label"],
            )
            for row in reader
        ]


def write_report_json(report: EvaluationReport, path: str | Path, provenance: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if provenance:
        payload["provenance"] = provenance
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
