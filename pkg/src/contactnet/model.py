"""Full network: backbone feeding the contact prior head, the interaction
detector and the contact segmenter, wired together with the two cross-branch
couplings (box-driven feature enhancement, mask-guided action features).

The action head depends on the segmentation map, which depends on the
detector's boxes, which are selected by action confidence. That cycle is
broken by computing preliminary action logits with a zeroed mask feature
(the exact mask-guidance-off path, same parameters) and using those only to
pick enhancer boxes; reported action logits always use the real mask
feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .backbone import BackboneConfig, ConvBackbone
from .boxes import (EnclosingRect, GridRect, box_cxcywh_to_xyxy,
                    enclosing_rectangle, scale_boxes_to_pixels, scale_to_grid)
from .contact_prior import ContactPriorConfig, ContactPriorHead
from .interaction import InteractionConfig, InteractionDetector, PairPredictions
from .matching import MatchWeights, build_cost_matrix, hungarian
from .scenes import InteractionPair, Vocab
from .segmenter import ContactSegmenter, RoiEnhancer, SegmenterConfig


@dataclass(frozen=True)
class AblationFlags:
    """Runtime switches for the incremental-module study. Disabling the
    contact prior bypasses the body-attention gate (all ones) and drops its
    BCE term; disabling mask guidance zeroes the 10-dim mask feature. No
    flag changes any parameter shape."""

    cpam_enabled: bool = True
    ho_enhancer_enabled: bool = True
    mask_guided_enabled: bool = True


@dataclass
class ModelOutputs:
    predictions: PairPredictions
    prior: torch.Tensor | None       # (B, 17) or None when the prior is disabled
    seg_probs: torch.Tensor          # (B, 18, H, W)
    mask_feature: torch.Tensor       # (B, 10)
    enhancer_rects: list[GridRect | None]


def rect_from_xyxy(boxes: np.ndarray) -> EnclosingRect | None:
    """Enclosing rectangle of an (N, 4) pixel xyxy array."""
    if boxes.size == 0:
        return None
    return EnclosingRect(
        x_min=float(boxes[:, 0].min()), y_min=float(boxes[:, 1].min()),
        x_max=float(boxes[:, 2].max()), y_max=float(boxes[:, 3].max()))


class PairContactModel(nn.Module):
    def __init__(self, vocab: Vocab,
                 backbone_config: BackboneConfig | None = None,
                 prior_config: ContactPriorConfig | None = None,
                 segmenter_config: SegmenterConfig | None = None,
                 interaction_config: InteractionConfig | None = None,
                 flags: AblationFlags | None = None,
                 match_weights: MatchWeights | None = None,
                 inference_threshold: float = 0.5):
        super().__init__()
        self.vocab = vocab
        self.flags = flags or AblationFlags()
        self.match_weights = match_weights or MatchWeights()
        self.inference_threshold = inference_threshold
        self.backbone = ConvBackbone(backbone_config)
        c = self.backbone.out_channels
        self.prior_head = ContactPriorHead(prior_config or ContactPriorConfig(in_channels=c))
        self.enhancer = RoiEnhancer()
        self.segmenter = ContactSegmenter(segmenter_config or SegmenterConfig(in_channels=c))
        self.detector = InteractionDetector(interaction_config or InteractionConfig(
            num_objects=len(vocab.objects), num_actions=vocab.num_real_actions,
            in_channels=c))

    def forward(self, images: torch.Tensor,
                gt_pairs: list[list[InteractionPair]] | None = None,
                teacher_force: bool = False) -> ModelOutputs:
        b, _, img_h, img_w = images.shape
        feats = self.backbone(images)
        prior = self.prior_head(feats) if self.flags.cpam_enabled else None

        memory = self.detector.encode(feats)
        state = self.detector.run_stacked_decoders(memory)
        human_boxes, object_boxes = self.detector.predict_boxes(state.d_h, state.d_o)
        object_logits = self.detector.predict_object_class(state.d_o)
        with torch.no_grad():
            prelim_actions = self.detector.predict_actions(
                state.d_a, self.detector.zero_mask_feature(b, state.d_a))
        prelim = PairPredictions(
            human_boxes=human_boxes.detach(), object_boxes=object_boxes.detach(),
            object_logits=object_logits.detach(), action_logits=prelim_actions)

        rects = self._enhancer_rects(prelim, (img_w, img_h), feats, gt_pairs, teacher_force)
        if self.flags.ho_enhancer_enabled:
            enhanced = torch.stack(
                [self.enhancer(feats[i], rects[i]) for i in range(b)])
        else:
            enhanced = feats
        seg_probs = self.segmenter(enhanced, prior, gate_bypass=not self.flags.cpam_enabled)

        if self.flags.mask_guided_enabled:
            mask_feature = self.detector.mask_roi(feats, seg_probs)
        else:
            mask_feature = self.detector.zero_mask_feature(b, feats)
        action_logits = self.detector.predict_actions(state.d_a, mask_feature)

        preds = PairPredictions(
            human_boxes=human_boxes, object_boxes=object_boxes,
            object_logits=object_logits, action_logits=action_logits)
        return ModelOutputs(predictions=preds, prior=prior, seg_probs=seg_probs,
                            mask_feature=mask_feature, enhancer_rects=rects)

    def _enhancer_rects(self, prelim: PairPredictions, image_size: tuple[int, int],
                        feats: torch.Tensor, gt_pairs, teacher_force: bool):
        """One grid rectangle (or None) per sample, chosen from gt boxes
        (teacher forcing), matched predicted boxes (training) or confident
        predicted boxes (inference)."""
        if not self.flags.ho_enhancer_enabled:
            return [None] * feats.shape[0]
        img_w, img_h = image_size
        gh, gw = feats.shape[2], feats.shape[3]
        stride = img_h // gh
        noint = self.vocab.no_interaction_index
        rects: list[GridRect | None] = []
        for i in range(feats.shape[0]):
            rect = None
            if gt_pairs is not None and teacher_force:
                gts = gt_pairs[i]
                rect = enclosing_rectangle(
                    [g.human_box for g in gts], [g.object_box for g in gts])
            elif gt_pairs is not None and self.training:
                gts = gt_pairs[i]
                if gts:
                    cost = build_cost_matrix(prelim, i, gts, image_size, self.match_weights)
                    match = hungarian(cost)
                    q_idx = [q for q, _ in match.assignment]
                    rect = self._rect_from_queries(prelim, i, q_idx, img_w, img_h)
            else:
                probs = torch.softmax(prelim.action_logits[i], dim=-1)
                keep = (probs[:, noint] < self.inference_threshold).nonzero(as_tuple=True)[0]
                rect = self._rect_from_queries(prelim, i, keep.tolist(), img_w, img_h)
            rects.append(None if rect is None
                         else scale_to_grid(rect, grid_w=gw, grid_h=gh, stride=stride))
        return rects

    def _rect_from_queries(self, preds: PairPredictions, batch_idx: int,
                           queries: list[int], img_w: int, img_h: int):
        if not queries:
            return None
        hb = preds.human_boxes[batch_idx, queries]
        ob = preds.object_boxes[batch_idx, queries]
        xyxy = box_cxcywh_to_xyxy(torch.cat([hb, ob], dim=0))
        xyxy = scale_boxes_to_pixels(xyxy, img_w, img_h).cpu().numpy()
        return rect_from_xyxy(xyxy)
