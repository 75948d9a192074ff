"""Transformer set predictor for human-object pairs.

Backbone features plus fixed 2-D sinusoidal position encodings feed a small
transformer encoder. Learnable human and object query matrices are decoded
jointly (concatenated, then split row-wise), their mean forms the action
queries, and three such decoder stages refine the states. Prediction heads
emit normalized center-size boxes, object logits and action logits; the
action head additionally consumes a 10-dim encoding of the feature crop
under the predicted contact mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import init_he
from .boxes import EnclosingRect, scale_to_grid
from .errors import ConfigError

MASK_FEATURE_DIM = 10


@dataclass(frozen=True)
class InteractionConfig:
    num_objects: int = 6
    num_actions: int = 8        # real actions; logits get one extra no_interaction slot
    in_channels: int = 64
    num_queries: int = 16
    query_dim: int = 64
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_stages: int = 3
    ffn_dim: int = 128
    dropout: float = 0.0
    shared_box_head: bool = True

    def __post_init__(self):
        if self.query_dim % self.num_heads:
            raise ConfigError("query_dim must divide evenly across heads")
        if self.query_dim % 4:
            raise ConfigError("query_dim must be a multiple of 4 for 2-D position encoding")
        if self.decoder_stages < 1:
            raise ConfigError("need at least one decoder stage")


@dataclass
class DecoderState:
    """Per-query feature matrices after decoding, each (B, N_q, C_Q)."""

    d_h: torch.Tensor
    d_o: torch.Tensor
    d_a: torch.Tensor


@dataclass
class PairPredictions:
    """Raw per-query outputs for one image batch.

    Boxes are normalized (cx, cy, w, h) in [0, 1]; action logits carry the
    no_interaction class at the LAST index.
    """

    human_boxes: torch.Tensor    # (B, N_q, 4)
    object_boxes: torch.Tensor   # (B, N_q, 4)
    object_logits: torch.Tensor  # (B, N_q, num_objects)
    action_logits: torch.Tensor  # (B, N_q, num_actions + 1)


def sinusoidal_position_encoding(grid_h: int, grid_w: int, dim: int,
                                 temperature: float = 10000.0) -> torch.Tensor:
    """Fixed 2-D sine/cosine embedding, one row per cell in row-major order.

    Half the channels encode the cell's row, half its column, so distinct
    cells always get distinct encodings.
    """
    if dim % 4:
        raise ConfigError("position encoding dim must be a multiple of 4")
    half = dim // 2
    freq = torch.arange(half, dtype=torch.float64)
    freq = temperature ** (2 * (freq // 2) / half)
    ys, xs = torch.meshgrid(
        torch.arange(grid_h, dtype=torch.float64),
        torch.arange(grid_w, dtype=torch.float64),
        indexing="ij",
    )
    pos_y = ys[..., None] / freq
    pos_x = xs[..., None] / freq
    pos_y = torch.stack((pos_y[..., 0::2].sin(), pos_y[..., 1::2].cos()), dim=-1).flatten(-2)
    pos_x = torch.stack((pos_x[..., 0::2].sin(), pos_x[..., 1::2].cos()), dim=-1).flatten(-2)
    return torch.cat((pos_y, pos_x), dim=-1).reshape(grid_h * grid_w, dim).float()


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden), nn.ReLU(), nn.Dropout(dropout), nn.Linear(hidden, dim))

    def forward(self, x):
        return self.net(x)


class EncoderLayer(nn.Module):
    """Post-norm self-attention + feed-forward."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.ffn = FeedForward(dim, ffn_dim, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        attn, _ = self.self_attn(x, x, x, need_weights=False)
        x = self.norm1(x + attn)
        return self.norm2(x + self.ffn(x))


class DecoderLayer(nn.Module):
    """Post-norm query self-attention, cross-attention to memory, feed-forward."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.ffn = FeedForward(dim, ffn_dim, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, queries, memory):
        attn, _ = self.self_attn(queries, queries, queries, need_weights=False)
        q = self.norm1(queries + attn)
        attn, _ = self.cross_attn(q, memory, memory, need_weights=False)
        q = self.norm2(q + attn)
        return self.norm3(q + self.ffn(q))


class BoxHead(nn.Module):
    """Three linear layers ending in sigmoid: query state -> (cx, cy, w, h)."""

    def __init__(self, dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, 4))
        self.apply(init_he)

    def forward(self, x):
        return torch.sigmoid(self.net(x))


class MaskGuidedRoi(nn.Module):
    """Compact encoding of the backbone features under the contact mask.

    Takes the argmax of the segmentation map, finds the minimal rectangle
    around all non-background pixels, maps it to the feature grid (floor
    mins, ceil maxes), average-pools the cropped features and projects to a
    10-dim vector. With an empty mask the crop falls back to the whole map,
    so the feature is always defined and gradients always flow.
    """

    def __init__(self, in_channels: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, MASK_FEATURE_DIM)
        self.apply(init_he)

    @staticmethod
    def contact_rect(seg_probs: torch.Tensor) -> EnclosingRect | None:
        """Minimal pixel rectangle around non-background argmax pixels of a
        single (18, H, W) map, or None if everything is background."""
        labels = seg_probs.argmax(dim=0)
        ys, xs = torch.nonzero(labels, as_tuple=True)
        if ys.numel() == 0:
            return None
        return EnclosingRect(
            x_min=float(xs.min()), y_min=float(ys.min()),
            x_max=float(xs.max()) + 1.0, y_max=float(ys.max()) + 1.0,
        )

    def forward(self, features: torch.Tensor, seg_probs: torch.Tensor) -> torch.Tensor:
        b, _, gh, gw = features.shape
        img_h = seg_probs.shape[2]
        stride = img_h // gh
        pooled = []
        for i in range(b):
            rect = self.contact_rect(seg_probs[i])
            if rect is None:
                crop = features[i]
            else:
                g = scale_to_grid(rect, grid_w=gw, grid_h=gh, stride=stride)
                crop = features[i, :, g.gy_min:g.gy_max, g.gx_min:g.gx_max]
            pooled.append(crop.mean(dim=(1, 2)))
        return self.fc(torch.stack(pooled))


class InteractionDetector(nn.Module):
    """Encoder-decoder pair detector over N_q query slots."""

    def __init__(self, config: InteractionConfig | None = None):
        super().__init__()
        cfg = config or InteractionConfig()
        self.config = cfg
        d = cfg.query_dim
        self.input_proj = nn.Conv2d(cfg.in_channels, d, kernel_size=1)
        self.encoder = nn.ModuleList(
            EncoderLayer(d, cfg.num_heads, cfg.ffn_dim, cfg.dropout)
            for _ in range(cfg.encoder_layers))
        self.human_queries = nn.Parameter(torch.empty(cfg.num_queries, d))
        self.object_queries = nn.Parameter(torch.empty(cfg.num_queries, d))
        nn.init.normal_(self.human_queries, std=1.0 / math.sqrt(d))
        nn.init.normal_(self.object_queries, std=1.0 / math.sqrt(d))
        # Independent weights per stage.
        self.instance_decoders = nn.ModuleList(
            DecoderLayer(d, cfg.num_heads, cfg.ffn_dim, cfg.dropout)
            for _ in range(cfg.decoder_stages))
        self.action_decoders = nn.ModuleList(
            DecoderLayer(d, cfg.num_heads, cfg.ffn_dim, cfg.dropout)
            for _ in range(cfg.decoder_stages))
        self.box_head = BoxHead(d)
        self.object_box_head = self.box_head if cfg.shared_box_head else BoxHead(d)
        self.object_class_head = nn.Linear(d, cfg.num_objects)
        self.mask_roi = MaskGuidedRoi(cfg.in_channels)
        self.action_head = nn.Sequential(
            nn.Linear(d + MASK_FEATURE_DIM, d), nn.ReLU(),
            nn.Linear(d, cfg.num_actions + 1))
        init_he(self.input_proj)
        init_he(self.object_class_head)
        self.action_head.apply(init_he)

    def encode(self, features: torch.Tensor) -> torch.Tensor:
        """(B, C, h, w) -> (B, h*w, C_Q) memory with position encoding added."""
        x = self.input_proj(features)
        b, d, gh, gw = x.shape
        tokens = x.flatten(2).transpose(1, 2)
        pe = sinusoidal_position_encoding(gh, gw, d).to(tokens.dtype)
        tokens = tokens + pe[None]
        for layer in self.encoder:
            tokens = layer(tokens)
        return tokens

    def decode_instances(self, queries: torch.Tensor, memory: torch.Tensor,
                         stage: int = 0) -> tuple[torch.Tensor, torch.Tensor]:
        """Run one instance decoder stage over 2*N_q concatenated queries and
        split the result row-wise into human and object halves."""
        n = queries.shape[1] // 2
        decoded = self.instance_decoders[stage](queries, memory)
        return decoded[:, :n], decoded[:, n:]

    def decode_actions(self, d_h: torch.Tensor, d_o: torch.Tensor,
                       memory: torch.Tensor, stage: int = 0) -> torch.Tensor:
        """Action queries are the arithmetic mean of the human and object
        states; one decoder stage refines them against the memory."""
        return self.action_decoders[stage](action_queries(d_h, d_o), memory)

    def run_stacked_decoders(self, memory: torch.Tensor,
                             stages: int | None = None) -> DecoderState:
        stages = self.config.decoder_stages if stages is None else stages
        b = memory.shape[0]
        queries = torch.cat([self.human_queries, self.object_queries], dim=0)
        queries = queries[None].expand(b, -1, -1).to(memory.dtype)
        d_h = d_o = d_a = None
        for t in range(stages):
            d_h, d_o = self.decode_instances(queries, memory, stage=t)
            d_a = self.decode_actions(d_h, d_o, memory, stage=t)
            queries = torch.cat([d_h, d_o], dim=1)
        return DecoderState(d_h=d_h, d_o=d_o, d_a=d_a)

    def predict_boxes(self, d_h: torch.Tensor, d_o: torch.Tensor):
        return self.box_head(d_h), self.object_box_head(d_o)

    def predict_object_class(self, d_o: torch.Tensor) -> torch.Tensor:
        return self.object_class_head(d_o)

    def predict_actions(self, d_a: torch.Tensor, mask_feature: torch.Tensor) -> torch.Tensor:
        """Broadcast the 10-dim mask feature onto every query row and classify.

        mask_feature is (B, 10); a zero vector reproduces the mask-guidance-off
        ablation without changing any parameter shape.
        """
        m = mask_feature[:, None, :].expand(-1, d_a.shape[1], -1).to(d_a.dtype)
        return self.action_head(torch.cat([d_a, m], dim=-1))

    def zero_mask_feature(self, batch: int, like: torch.Tensor) -> torch.Tensor:
        return torch.zeros(batch, MASK_FEATURE_DIM, dtype=like.dtype, device=like.device)


def action_queries(d_h: torch.Tensor, d_o: torch.Tensor) -> torch.Tensor:
    """Exact arithmetic mean of the two instance streams."""
    return (d_h + d_o) / 2
