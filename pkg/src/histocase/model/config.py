"""Network topology configuration and presets.

Units are pre-activation residual blocks with the fixed internal order
BatchNorm, ReLU, Conv3x3, BatchNorm, ReLU, Conv3x3.  The first unit of a
downsampling or width-changing stage uses a 1x1 projection shortcut; all
other units use identity shortcuts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from histocase.errors import ConfigError


@dataclass(frozen=True)
class StageConfig:
    width: int
    units: int
    downsample: bool


@dataclass(frozen=True)
class UnitPlan:
    """Resolved shape information for one residual unit."""

    name: str
    in_channels: int
    out_channels: int
    stride: int

    @property
    def has_projection(self) -> bool:
        return self.stride != 1 or self.in_channels != self.out_channels


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple[int, int, int]  # (H, W, C) channels-last
    stages: tuple[StageConfig, ...]
    num_classes: int
    stem_width: int | None = None
    conv_bias: bool = False
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"bad input_shape {self.input_shape}")
        if not self.stages:
            raise ConfigError("at least one stage required")
        for s in self.stages:
            if s.width < 1 or s.units < 1:
                raise ConfigError(f"bad stage {s}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def effective_stem_width(self) -> int:
        return self.stem_width if self.stem_width is not None else self.stages[0].width

    def unit_plans(self) -> list[UnitPlan]:
        plans = []
        in_ch = self.effective_stem_width
        for i, stage in enumerate(self.stages):
            for j in range(stage.units):
                stride = 2 if (j == 0 and stage.downsample) else 1
                plans.append(
                    UnitPlan(
                        name=f"s{i}u{j}",
                        in_channels=in_ch,
                        out_channels=stage.width,
                        stride=stride,
                    )
                )
                in_ch = stage.width
        return plans

    def final_width(self) -> int:
        return self.stages[-1].width

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "stages": [[s.width, s.units, s.downsample] for s in self.stages],
            "num_classes": self.num_classes,
            "stem_width": self.stem_width,
            "conv_bias": self.conv_bias,
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkConfig":
        return cls(
            input_shape=tuple(d["input_shape"]),
            stages=tuple(StageConfig(*s) for s in d["stages"]),
            num_classes=d["num_classes"],
            stem_width=d.get("stem_width"),
            conv_bias=d.get("conv_bias", False),
            bn_eps=d.get("bn_eps", 1e-5),
            bn_momentum=d.get("bn_momentum", 0.9),
        )


def tiny_config(input_shape: tuple[int, int, int], num_classes: int = 2) -> NetworkConfig:
    """Desk-scale default: two stages of widths 8 and 16."""
    return NetworkConfig(
        input_shape=tuple(input_shape),
        stages=(StageConfig(8, 2, False), StageConfig(16, 2, True)),
        num_classes=num_classes,
    )


def resnet18_config(input_shape: tuple[int, int, int], num_classes: int = 2) -> NetworkConfig:
    """Canonical 18-layer plan: four stages of two units, widths 64..512,
    stride-2 downsampling at every stage boundary after the first."""
    return NetworkConfig(
        input_shape=tuple(input_shape),
        stages=(
            StageConfig(64, 2, False),
            StageConfig(128, 2, True),
            StageConfig(256, 2, True),
            StageConfig(512, 2, True),
        ),
        num_classes=num_classes,
        stem_width=64,
    )


PRESETS = {
    "tiny": tiny_config,
    "resnet18": resnet18_config,
}


def preset_config(
    name: str, input_shape: tuple[int, int, int], num_classes: int
) -> NetworkConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](input_shape, num_classes)
