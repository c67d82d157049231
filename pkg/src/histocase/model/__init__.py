"""Pre-activation residual classifier with analytic gradients."""

from histocase.model.config import (
    NetworkConfig,
    StageConfig,
    preset_config,
    resnet18_config,
    tiny_config,
)
from histocase.model.network import (
    Parameters,
    assemble_batch,
    assemble_case_tensor,
    forward,
    init_parameters,
    loss_and_grad,
    predict,
)
from histocase.model.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "NetworkConfig",
    "StageConfig",
    "tiny_config",
    "resnet18_config",
    "preset_config",
    "Parameters",
    "init_parameters",
    "forward",
    "loss_and_grad",
    "predict",
    "assemble_case_tensor",
    "assemble_batch",
    "save_checkpoint",
    "load_checkpoint",
]
