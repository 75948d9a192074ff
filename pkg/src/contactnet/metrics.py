"""Evaluation metrics: part-labeled segmentation accuracy and pair-detection
mean average precision.

Segmentation metrics compare hard label maps (argmax of the predicted
softmax vs ground truth): SC-Acc is the fraction of ground-truth contact
pixels carrying the correct part label, C-Acc the binary contact-vs-
background pixel accuracy, mIoU the mean IoU over part classes present in
either map, and wIoU the gt-pixel-proportion weighted IoU. Detection mAP
follows the standard dual-IoU-0.5 pair protocol with all-point PR
interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import pairwise_iou
from .scenes import NUM_PARTS, InteractionPair


@dataclass
class SegMetrics:
    sc_acc: float
    c_acc: float
    miou: float
    wiou: float
    per_class_iou: np.ndarray          # (17,), NaN for classes absent from both maps
    per_class_pixel_weight: np.ndarray  # (17,), gt pixel share among contact pixels


@dataclass
class DetectionMetrics:
    map: float
    per_action_ap: dict[int, float]


@dataclass
class ScoredPair:
    """One detection: pixel-space xyxy boxes plus classes and confidence."""

    human_box: np.ndarray
    object_box: np.ndarray
    object_class: int
    action_class: int
    score: float


def _class_intersection_union(pred: np.ndarray, gt: np.ndarray):
    inter = np.zeros(NUM_PARTS, dtype=np.int64)
    union = np.zeros(NUM_PARTS, dtype=np.int64)
    for k in range(1, NUM_PARTS + 1):
        p = pred == k
        g = gt == k
        inter[k - 1] = np.logical_and(p, g).sum()
        union[k - 1] = np.logical_or(p, g).sum()
    return inter, union


def seg_metrics(pred: np.ndarray, gt: np.ndarray) -> SegMetrics:
    """Metrics for one predicted/ground-truth label map pair (values 0-17).

    With no gt contact pixels SC-Acc (and wIoU) are undefined and reported
    as NaN; dataset aggregation skips such images.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")

    contact = gt > 0
    n_contact = int(contact.sum())
    sc_acc = float((pred[contact] == gt[contact]).mean()) if n_contact else math.nan
    c_acc = float(((pred > 0) == contact).mean())

    inter, union = _class_intersection_union(pred, gt)
    iou = np.full(NUM_PARTS, np.nan)
    present = union > 0
    iou[present] = inter[present] / union[present]
    miou = float(np.nanmean(iou)) if present.any() else math.nan

    gt_counts = np.array([(gt == k).sum() for k in range(1, NUM_PARTS + 1)], dtype=np.int64)
    weights = gt_counts / n_contact if n_contact else np.zeros(NUM_PARTS)
    wiou = float(np.nansum(weights * np.where(np.isnan(iou), 0.0, iou))) if n_contact else math.nan
    return SegMetrics(sc_acc=sc_acc, c_acc=c_acc, miou=miou, wiou=wiou,
                      per_class_iou=iou, per_class_pixel_weight=weights)


@dataclass
class SegMetricsAccumulator:
    """Dataset-level aggregation: IoU counts are pooled across images, SC-Acc
    averages per-image values over images that have contact pixels."""

    inter: np.ndarray = field(default_factory=lambda: np.zeros(NUM_PARTS, dtype=np.int64))
    union: np.ndarray = field(default_factory=lambda: np.zeros(NUM_PARTS, dtype=np.int64))
    gt_counts: np.ndarray = field(default_factory=lambda: np.zeros(NUM_PARTS, dtype=np.int64))
    binary_correct: int = 0
    pixels: int = 0
    sc_sum: float = 0.0
    sc_images: int = 0

    def add(self, pred: np.ndarray, gt: np.ndarray) -> None:
        inter, union = _class_intersection_union(pred, gt)
        self.inter += inter
        self.union += union
        self.gt_counts += np.array([(gt == k).sum() for k in range(1, NUM_PARTS + 1)])
        contact = gt > 0
        self.binary_correct += int(((pred > 0) == contact).sum())
        self.pixels += gt.size
        if contact.any():
            self.sc_sum += float((pred[contact] == gt[contact]).mean())
            self.sc_images += 1

    def result(self) -> SegMetrics:
        iou = np.full(NUM_PARTS, np.nan)
        present = self.union > 0
        iou[present] = self.inter[present] / self.union[present]
        total_gt = self.gt_counts.sum()
        weights = self.gt_counts / total_gt if total_gt else np.zeros(NUM_PARTS)
        return SegMetrics(
            sc_acc=self.sc_sum / self.sc_images if self.sc_images else math.nan,
            c_acc=self.binary_correct / self.pixels if self.pixels else math.nan,
            miou=float(np.nanmean(iou)) if present.any() else math.nan,
            wiou=float(np.nansum(weights * np.where(np.isnan(iou), 0.0, iou))) if total_gt else math.nan,
            per_class_iou=iou,
            per_class_pixel_weight=weights,
        )


def average_precision(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """All-point interpolated AP over a descending-confidence PR sweep."""
    mrec = np.concatenate([[0.0], recalls, [1.0]])
    mpre = np.concatenate([[0.0], precisions, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def hoi_map(preds_per_image: list[list[ScoredPair]],
            gts_per_image: list[list[InteractionPair]],
            iou_threshold: float = 0.5) -> DetectionMetrics:
    """Pair-detection mAP.

    A prediction is a true positive iff its action and object class match an
    unclaimed gt pair in the same image and BOTH the human and object boxes
    reach the IoU threshold. Predictions are consumed greedily in descending
    confidence; AP uses all-point interpolation; mAP averages over action
    classes that occur in the ground truth.
    """
    gt_actions = sorted({g.action_class for gts in gts_per_image for g in gts})
    per_action_ap: dict[int, float] = {}

    for action in gt_actions:
        n_gt = sum(1 for gts in gts_per_image for g in gts if g.action_class == action)
        entries = []
        for img, preds in enumerate(preds_per_image):
            for p in preds:
                if p.action_class == action:
                    entries.append((p.score, img, p))
        entries.sort(key=lambda e: -e[0])

        claimed: set[tuple[int, int]] = set()
        tp = np.zeros(len(entries))
        for rank, (_, img, p) in enumerate(entries):
            gts = gts_per_image[img]
            best, best_iou = None, iou_threshold
            for gi, g in enumerate(gts):
                if (img, gi) in claimed or g.action_class != action \
                        or g.object_class != p.object_class:
                    continue
                iou_h = pairwise_iou(p.human_box[None], np.asarray(g.human_box.as_tuple())[None])[0, 0]
                iou_o = pairwise_iou(p.object_box[None], np.asarray(g.object_box.as_tuple())[None])[0, 0]
                pair_iou = min(iou_h, iou_o)
                if pair_iou >= best_iou:
                    best, best_iou = gi, pair_iou
            if best is not None:
                claimed.add((img, best))
                tp[rank] = 1.0
        if n_gt == 0:
            continue
        if len(entries) == 0:
            per_action_ap[action] = 0.0
            continue
        cum_tp = np.cumsum(tp)
        recalls = cum_tp / n_gt
        precisions = cum_tp / np.arange(1, len(entries) + 1)
        per_action_ap[action] = average_precision(recalls, precisions)

    mean_ap = float(np.mean(list(per_action_ap.values()))) if per_action_ap else math.nan
    return DetectionMetrics(map=mean_ap, per_action_ap=per_action_ap)


def metrics_report(det: DetectionMetrics, seg: SegMetrics) -> dict:
    """JSON-ready report mirroring the evaluation table column layout."""
    return {
        "mAP": det.map,
        "SC-Acc.": seg.sc_acc,
        "C-Acc.": seg.c_acc,
        "mIoU": seg.miou,
        "wIoU": seg.wiou,
        "per_action_ap": {int(k): v for k, v in det.per_action_ap.items()},
        "per_class_iou": [None if math.isnan(v) else float(v) for v in seg.per_class_iou],
        "per_class_pixel_weight": [float(v) for v in seg.per_class_pixel_weight],
    }
