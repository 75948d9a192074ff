"""Box geometry shared by the segmenter, matcher and metrics.

Coordinates are continuous: a box (x1, y1, x2, y2) covers the half-open
pixel region [x1, x2) x [y1, y2), so area is (x2-x1)*(y2-y1) with no +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .scenes import Box


@dataclass(frozen=True)
class EnclosingRect:
    """Tight pixel rectangle covering every input box."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class GridRect:
    """Half-open cell range [gx_min, gx_max) x [gy_min, gy_max) on the
    stride-32 feature grid."""

    gx_min: int
    gy_min: int
    gx_max: int
    gy_max: int


def enclosing_rectangle(humans: list[Box], objects: list[Box]) -> EnclosingRect | None:
    """Minimal rectangle covering all human and object boxes.

    Component-wise min over top-left corners and max over bottom-right
    corners of both sets pooled together. Returns None when both lists are
    empty, which callers treat as "no interaction anywhere".
    """
    boxes = list(humans) + list(objects)
    if not boxes:
        return None
    return EnclosingRect(
        x_min=min(b.x1 for b in boxes),
        y_min=min(b.y1 for b in boxes),
        x_max=max(b.x2 for b in boxes),
        y_max=max(b.y2 for b in boxes),
    )


def scale_to_grid(rect: EnclosingRect, grid_w: int, grid_h: int, stride: int = 32) -> GridRect:
    """Map a pixel rectangle onto feature-grid cells.

    Mins are floor-divided and maxes ceil-divided by the stride so every
    covered pixel lands inside the cell range; the range is clamped to the
    grid and never empty.
    """
    gx_min = int(math.floor(rect.x_min / stride))
    gy_min = int(math.floor(rect.y_min / stride))
    gx_max = int(math.ceil(rect.x_max / stride))
    gy_max = int(math.ceil(rect.y_max / stride))
    gx_min = min(max(gx_min, 0), grid_w - 1)
    gy_min = min(max(gy_min, 0), grid_h - 1)
    gx_max = min(max(gx_max, gx_min + 1), grid_w)
    gy_max = min(max(gy_max, gy_min + 1), grid_h)
    return GridRect(gx_min=gx_min, gy_min=gy_min, gx_max=gx_max, gy_max=gy_max)


def box_cxcywh_to_xyxy(boxes):
    """(..., 4) center-size boxes to corner form; works on torch and numpy."""
    cx, cy, bw, bh = boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3]
    if torch.is_tensor(boxes):
        return torch.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], dim=-1)
    return np.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], axis=-1)


def box_xyxy_to_cxcywh(boxes):
    """(..., 4) corner boxes to center-size form; works on torch and numpy."""
    x1, y1, x2, y2 = boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3]
    if torch.is_tensor(boxes):
        return torch.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], dim=-1)
    return np.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], axis=-1)


def scale_boxes_to_pixels(boxes, width: int, height: int):
    """Scale normalized xyxy boxes to pixel units."""
    scale = [width, height, width, height]
    if torch.is_tensor(boxes):
        return boxes * torch.as_tensor(scale, dtype=boxes.dtype, device=boxes.device)
    return boxes * np.asarray(scale, dtype=boxes.dtype)


def _iou_union(a, b, eps):
    lt_x = _maximum(a[..., 0], b[..., 0])
    lt_y = _maximum(a[..., 1], b[..., 1])
    rb_x = _minimum(a[..., 2], b[..., 2])
    rb_y = _minimum(a[..., 3], b[..., 3])
    inter = _clamp_min(rb_x - lt_x, 0) * _clamp_min(rb_y - lt_y, 0)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    return inter / (union + eps), union


def elementwise_iou(a, b, eps: float = 1e-9):
    """IoU of paired xyxy boxes, shapes (..., 4) and (..., 4) -> (...,).

    Accepts torch tensors (differentiable) or numpy arrays.
    """
    iou, _ = _iou_union(a, b, eps)
    return iou


def elementwise_giou(a, b, eps: float = 1e-9):
    """Generalized IoU of paired xyxy boxes: IoU - (hull - union) / hull.

    In [-1, 1]; equals IoU when the hull is the union, and goes negative for
    disjoint boxes.
    """
    iou, union = _iou_union(a, b, eps)
    hull_x = _maximum(a[..., 2], b[..., 2]) - _minimum(a[..., 0], b[..., 0])
    hull_y = _maximum(a[..., 3], b[..., 3]) - _minimum(a[..., 1], b[..., 1])
    hull = _clamp_min(hull_x, 0) * _clamp_min(hull_y, 0)
    return iou - (hull - union) / (hull + eps)


def pairwise_iou(a: np.ndarray, b: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """IoU matrix of xyxy boxes, shapes (N, 4) x (M, 4) -> (N, M). numpy only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / (union + eps)


def _maximum(x, y):
    if torch.is_tensor(x) or torch.is_tensor(y):
        return torch.maximum(x, y)
    return np.maximum(x, y)


def _minimum(x, y):
    if torch.is_tensor(x) or torch.is_tensor(y):
        return torch.minimum(x, y)
    return np.minimum(x, y)


def _clamp_min(x, lo):
    if torch.is_tensor(x):
        return torch.clamp(x, min=lo)
    return np.clip(x, lo, None)
