"""Per-part contact probability head.

Globally pools the backbone map, pushes it through two fully connected
blocks (linear, norm, ReLU, dropout) and a final linear layer, and emits a
17-way sigmoid: the probability that each body part is in contact somewhere
in the image. Supervised with mean binary cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .backbone import init_he
from .errors import ConfigError
from .scenes import NUM_PARTS


@dataclass(frozen=True)
class ContactPriorConfig:
    in_channels: int = 64
    dropout: float = 0.1
    # BatchNorm degenerates at batch size 1; "layer" is batch-independent.
    norm: str = "batch"        # batch | layer | none


def _fc_norm(kind: str, width: int) -> nn.Module:
    if kind == "batch":
        return nn.BatchNorm1d(width)
    if kind == "layer":
        return nn.LayerNorm(width)
    if kind == "none":
        return nn.Identity()
    raise ConfigError(f"unknown norm {kind!r}")


class FCBlock(nn.Module):
    """Linear, normalization, ReLU, dropout."""

    def __init__(self, in_width: int, out_width: int, norm: str, dropout: float):
        super().__init__()
        self.fc = nn.Linear(in_width, out_width)
        self.norm = _fc_norm(norm, out_width)
        self.act = nn.ReLU()
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        x = self.fc(x)
        if (isinstance(self.norm, nn.BatchNorm1d) and self.norm.training
                and x.shape[0] == 1):
            # Batch statistics degenerate on a single sample; fall back to
            # the running statistics for that step.
            self.norm.eval()
            try:
                x = self.norm(x)
            finally:
                self.norm.train()
        else:
            x = self.norm(x)
        return self.drop(self.act(x))


class ContactPriorHead(nn.Module):
    """(B, C, h, w) feature map -> (B, 17) contact probabilities in (0, 1)."""

    def __init__(self, config: ContactPriorConfig | None = None):
        super().__init__()
        cfg = config or ContactPriorConfig()
        self.config = cfg
        c = cfg.in_channels
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.block1 = FCBlock(c, c // 2, cfg.norm, cfg.dropout)
        self.block2 = FCBlock(c // 2, c // 4, cfg.norm, cfg.dropout)
        # Bare linear before the sigmoid; no extra nonlinearity.
        self.out = nn.Linear(c // 4, NUM_PARTS)
        self.apply(init_he)

    def pooled(self, features: torch.Tensor) -> torch.Tensor:
        """Global average pool only, exposed for testing."""
        return self.pool(features).flatten(1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = self.pooled(features)
        x = self.block2(self.block1(x))
        return torch.sigmoid(self.out(x))


def contact_prior_loss(probs: torch.Tensor, gt_labels: torch.Tensor,
                       eps: float = 1e-12) -> torch.Tensor:
    """Mean binary cross-entropy between predicted probabilities and the
    binary ground-truth contact vector(s).

    Accepts (17,) or (B, 17) inputs. gt entries must be exactly 0 or 1.
    """
    if probs.shape != gt_labels.shape:
        raise ValueError(f"shape mismatch {tuple(probs.shape)} vs {tuple(gt_labels.shape)}")
    gt = gt_labels.to(probs.dtype)
    if not bool(((gt == 0) | (gt == 1)).all()):
        raise ValueError("ground-truth contact labels must be binary")
    # Keep both logs finite at the working precision.
    eps = max(eps, float(torch.finfo(probs.dtype).eps))
    p = probs.clamp(eps, 1.0 - eps)
    return -(gt * torch.log(p) + (1.0 - gt) * torch.log(1.0 - p)).mean()
