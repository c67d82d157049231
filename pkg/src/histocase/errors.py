"""Exception hierarchy shared across the package.

Every error the pipeline can surface to a caller has a named class here so
CLI handlers can emit machine-readable error records.
"""


class HistocaseError(Exception):
    """Base class for all package errors."""


class ConfigError(HistocaseError):
    """Invalid configuration value or combination."""


# -- manifest / dataset -------------------------------------------------

class MissingColumn(HistocaseError):
    """Manifest CSV lacks a required header column."""


class DuplicateImageId(HistocaseError):
    """Two manifest rows share the same image_id."""


class UnknownLabel(HistocaseError):
    """A record's malignancy or magnification is outside the declared sets."""


class UnreadablePath(HistocaseError):
    """Manifest source path does not exist or cannot be read."""


class TooFewPatients(HistocaseError):
    """Requested split cannot produce nonempty train and test patient sets."""


class DecodeFailure(HistocaseError):
    """Raster file could not be decoded."""


class ChannelMismatch(HistocaseError):
    """Input raster is not 3-channel RGB."""


# -- case generation ----------------------------------------------------

class EmptyCell(HistocaseError):
    """Some (label, magnification) image set is empty, so no case exists."""

    def __init__(self, label, magnifications):
        self.label = label
        self.magnifications = list(magnifications)
        super().__init__(
            f"label {label!r} has no images at magnifications {self.magnifications}"
        )


class NotMultiple(HistocaseError):
    """Requested case count is not divisible by the number of labels."""


class InfeasibleK(HistocaseError):
    """Requested per-label case count exceeds the distinct combinations."""


class RetryLimitExceeded(HistocaseError):
    """Internal error: rejection sampling exceeded its retry cap."""


class PatientMissingMagnification(HistocaseError):
    """A patient lacks images at one or more magnifications."""

    def __init__(self, patient_id, magnifications):
        self.patient_id = patient_id
        self.magnifications = list(magnifications)
        super().__init__(
            f"patient {patient_id!r} has no images at magnifications "
            f"{self.magnifications}"
        )


# -- model / training ---------------------------------------------------

class ShapeMismatch(HistocaseError):
    """Tensor shapes are inconsistent with the network configuration."""


class NonFiniteActivation(HistocaseError):
    """NaN or Inf detected in network outputs (divergence signal)."""


class NonFiniteGradient(HistocaseError):
    """NaN or Inf detected in a gradient tensor."""


# -- metrics / reporting ------------------------------------------------

class EmptyInput(HistocaseError):
    """Metric called on an empty prediction list."""


class InconsistentTruth(HistocaseError):
    """A patient carries conflicting ground-truth labels."""


class MissingArtifact(HistocaseError):
    """Expected run artifact file or directory is absent."""
