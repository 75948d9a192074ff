"""Overlay rendering: detection boxes and labels on the image next to the
contact segmentation on a black background."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .metrics import ScoredPair
from .scenes import NUM_PARTS, Vocab, part_color

RED = (255, 40, 40)
GREEN = (40, 200, 80)
BLUE = (80, 120, 255)


def colorize_contact_map(contact_map: np.ndarray) -> np.ndarray:
    """(H, W) part labels to an RGB uint8 image; background stays black."""
    out = np.zeros((*contact_map.shape, 3), dtype=np.uint8)
    for k in range(1, NUM_PARTS + 1):
        mask = contact_map == k
        if mask.any():
            out[mask] = tuple(int(255 * c) for c in part_color(k))
    return out


def render_overlay(image: np.ndarray, detections: list[ScoredPair],
                   contact_map: np.ndarray, vocab: Vocab,
                   score_threshold: float = 0.3) -> Image.Image:
    """Side-by-side panel: boxes + class text on the image (red human,
    green object, blue action text), predicted contact regions on black."""
    h, w = image.shape[:2]
    left = Image.fromarray((np.clip(image, 0, 1) * 255).astype(np.uint8))
    draw = ImageDraw.Draw(left)
    for det in detections:
        if det.score < score_threshold:
            continue
        hx1, hy1, hx2, hy2 = [float(v) for v in det.human_box]
        ox1, oy1, ox2, oy2 = [float(v) for v in det.object_box]
        draw.rectangle([hx1, hy1, max(hx2, hx1 + 1), max(hy2, hy1 + 1)], outline=RED)
        draw.rectangle([ox1, oy1, max(ox2, ox1 + 1), max(oy2, oy1 + 1)], outline=GREEN)
        draw.text((hx1 + 2, hy1 + 2), vocab.actions[det.action_class], fill=BLUE)
        draw.text((ox1 + 2, max(oy1 - 10, 0)), vocab.objects[det.object_class], fill=GREEN)
    right = Image.fromarray(colorize_contact_map(contact_map))
    panel = Image.new("RGB", (2 * w + 4, h), color=(30, 30, 30))
    panel.paste(left, (0, 0))
    panel.paste(right, (w + 4, 0))
    return panel
