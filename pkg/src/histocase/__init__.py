"""Case-based multi-magnification histopathology malignancy classification.

Pipeline: catalog images into a manifest, split patients into disjoint
train/test folds, sample balanced multi-magnification cases, train a
pre-activation residual network on channel-fused case tensors, and score
predictions with case-, patient- and diagnosis-level metrics.
"""

__version__ = "0.1.0"
