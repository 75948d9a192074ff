"""Convolutional feature extractor producing the shared stride-32 map.

A 5-stage strided stack stands in for a heavyweight backbone: every
downstream branch only depends on the output shape (H/32, W/32, C).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigError

STRIDE = 32


@dataclass(frozen=True)
class BackboneConfig:
    channels: int = 64
    stage_widths: tuple[int, ...] = (16, 32, 48, 64, 64)
    norm: str = "group"        # group | batch | none
    activation: str = "relu"   # relu | gelu

    def __post_init__(self):
        if len(self.stage_widths) != 5:
            raise ConfigError(f"need 5 stride-2 stages for total stride 32, got {len(self.stage_widths)}")
        if self.stage_widths[-1] != self.channels:
            raise ConfigError("last stage width must equal output channels")


def make_norm(kind: str, channels: int) -> nn.Module:
    if kind == "group":
        return nn.GroupNorm(num_groups=min(8, channels), num_channels=channels)
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "none":
        return nn.Identity()
    raise ConfigError(f"unknown norm {kind!r}")


def make_activation(kind: str) -> nn.Module:
    if kind == "relu":
        return nn.ReLU()
    if kind == "gelu":
        return nn.GELU()
    raise ConfigError(f"unknown activation {kind!r}")


class ConvBackbone(nn.Module):
    """Five stride-2 conv stages: (B, 3, H, W) -> (B, C, H/32, W/32)."""

    def __init__(self, config: BackboneConfig | None = None):
        super().__init__()
        self.config = config or BackboneConfig()
        stages = []
        in_ch = 3
        for out_ch in self.config.stage_widths:
            stages.append(nn.Sequential(
                nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
                make_norm(self.config.norm, out_ch),
                make_activation(self.config.activation),
            ))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.apply(init_he)

    @property
    def out_channels(self) -> int:
        return self.config.channels

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        h, w = images.shape[2], images.shape[3]
        if h % STRIDE or w % STRIDE:
            raise ValueError(f"image size {h}x{w} must be a multiple of {STRIDE}")
        return self.stages(images)


def init_he(module: nn.Module) -> None:
    """Kaiming-normal init for conv/linear weights, zero biases."""
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
