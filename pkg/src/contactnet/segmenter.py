"""Contact segmentation branch.

Backbone features are optionally amplified inside the rectangle enclosing
the detected humans and objects (learnable factor, initialized to 1), run
through a four-stage upsampling decoder to H/2 x W/2 x 64, gated channel-wise
by the contact prior, and projected to an (N_c + 1)-channel per-pixel
softmax where channel 0 is background.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import init_he, make_norm
from .boxes import GridRect
from .scenes import NUM_PARTS


@dataclass(frozen=True)
class SegmenterConfig:
    in_channels: int = 64
    decoder_channels: tuple[int, int, int, int] = (64, 64, 64, 64)
    norm: str = "group"
    attention_hidden: int = 64
    background_weight: float = 0.25


class RoiEnhancer(nn.Module):
    """Multiplies feature values inside a grid rectangle by a learnable
    scalar (initialized to 1.0, making the module an exact identity)."""

    def __init__(self):
        super().__init__()
        self.delta = nn.Parameter(torch.tensor(1.0))

    def forward(self, features: torch.Tensor, rect: GridRect | None) -> torch.Tensor:
        if rect is None:
            return features
        mult = torch.ones_like(features)
        mult[..., rect.gy_min:rect.gy_max, rect.gx_min:rect.gx_max] = self.delta.to(features.dtype)
        return features * mult


class SegDecoder(nn.Module):
    """Four {conv, norm, ReLU, 2x upsample} stages: stride 32 -> stride 2."""

    def __init__(self, config: SegmenterConfig | None = None):
        super().__init__()
        cfg = config or SegmenterConfig()
        self.config = cfg
        stages = []
        in_ch = cfg.in_channels
        for out_ch in cfg.decoder_channels:
            stages.append(nn.Sequential(
                nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
                make_norm(cfg.norm, out_ch),
                nn.ReLU(),
                nn.Upsample(scale_factor=2, mode="nearest"),
            ))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.apply(init_he)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.stages(features)


class BodyAttention(nn.Module):
    """Channel gate derived from the 17-way contact prior.

    The prior runs through FC, ReLU, FC, sigmoid to one weight per decoder
    channel, then multiplies the decoder features along channels. With
    ``bypass`` (or no prior) the gate is all ones, an exact identity.
    """

    def __init__(self, channels: int = 64, hidden: int = 64):
        super().__init__()
        self.expand = nn.Sequential(
            nn.Linear(NUM_PARTS, hidden),
            nn.ReLU(),
            nn.Linear(hidden, channels),
        )
        self.channels = channels
        self.apply(init_he)

    def gate(self, prior: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.expand(prior))

    def forward(self, decoded: torch.Tensor, prior: torch.Tensor | None,
                bypass: bool = False) -> torch.Tensor:
        if bypass or prior is None:
            g = torch.ones(decoded.shape[0], self.channels,
                           dtype=decoded.dtype, device=decoded.device)
        else:
            g = self.gate(prior).to(decoded.dtype)
        return decoded * g[:, :, None, None]


class SegmentationHead(nn.Module):
    """Conv to N_c + 1 channels, 2x upsample to full resolution, softmax."""

    def __init__(self, in_channels: int = 64):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, NUM_PARTS + 1, kernel_size=3, padding=1)
        self.apply(init_he)

    def forward(self, attended: torch.Tensor) -> torch.Tensor:
        logits = F.interpolate(self.proj(attended), scale_factor=2, mode="nearest")
        return torch.softmax(logits, dim=1)


class ContactSegmenter(nn.Module):
    """Decoder, body attention and head chained; input features are assumed
    to be (optionally) enhanced already."""

    def __init__(self, config: SegmenterConfig | None = None):
        super().__init__()
        cfg = config or SegmenterConfig()
        self.config = cfg
        self.decoder = SegDecoder(cfg)
        self.attention = BodyAttention(cfg.decoder_channels[-1], cfg.attention_hidden)
        self.head = SegmentationHead(cfg.decoder_channels[-1])

    def forward(self, features: torch.Tensor, prior: torch.Tensor | None,
                gate_bypass: bool = False) -> torch.Tensor:
        decoded = self.decoder(features)
        attended = self.attention(decoded, prior, bypass=gate_bypass)
        return self.head(attended)


def seg_loss(probs: torch.Tensor, gt_map: torch.Tensor,
             background_weight: float = 0.25, eps: float = 1e-12) -> torch.Tensor:
    """Weighted mean per-pixel cross-entropy of a softmax map against hard
    part labels.

    probs is (B, 18, H, W); gt_map is (B, H, W) with values in [0, 17].
    The background class (label 0) is down-weighted because contact pixels
    are rare; torch's weighted mean (sum of weighted NLL over sum of picked
    weights) keeps the uniform-probability loss exactly ln 18 regardless of
    the weight.
    """
    if probs.ndim == 3:
        probs = probs[None]
    if gt_map.ndim == 2:
        gt_map = gt_map[None]
    if probs.shape[0] != gt_map.shape[0] or probs.shape[2:] != gt_map.shape[1:]:
        raise ValueError(f"shape mismatch {tuple(probs.shape)} vs {tuple(gt_map.shape)}")
    gt = gt_map.long()
    if int(gt.max()) > NUM_PARTS or int(gt.min()) < 0:
        raise ValueError(f"gt labels must be in [0, {NUM_PARTS}], got max {int(gt.max())}")
    weight = torch.ones(NUM_PARTS + 1, dtype=probs.dtype, device=probs.device)
    weight[0] = background_weight
    log_probs = torch.log(probs.clamp_min(eps))
    return F.nll_loss(log_probs, gt, weight=weight, reduction="mean")
