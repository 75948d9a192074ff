"""Hungarian assignment between query predictions and ground-truth pairs,
the per-pair matching loss, and the total training objective.

Assignment is recomputed every step from a no-grad cost matrix; gradients
flow only through the losses of matched queries (plus the no_interaction
cross-entropy of unmatched ones).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

from .boxes import box_cxcywh_to_xyxy, box_xyxy_to_cxcywh, elementwise_giou
from .errors import ConfigError
from .interaction import PairPredictions
from .scenes import InteractionPair


@dataclass(frozen=True)
class MatchWeights:
    """Relative weights of the cost/loss components. The paper defers these
    to the cited set-prediction methods, so they are configuration."""

    cls: float = 1.0
    box: float = 2.5
    iou: float = 1.0
    no_interaction: float = 0.2


@dataclass(frozen=True)
class CostBreakdown:
    cls_cost: float
    box_cost: float
    iou_cost: float
    total: float


@dataclass(frozen=True)
class MatchResult:
    """Injective assignment of query indices to ground-truth indices."""

    assignment: tuple[tuple[int, int], ...]
    unmatched_queries: tuple[int, ...]


@dataclass
class LossReport:
    match_loss: float
    bce_loss: float
    ce_loss: float
    total: float
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return {
            "match_loss": float(self.match_loss),
            "bce_loss": float(self.bce_loss),
            "ce_loss": float(self.ce_loss),
            "total": float(self.total),
            "alpha": self.alpha,
            "beta": self.beta,
        }


def normalized_gt_boxes(gt: InteractionPair, image_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """GT boxes as normalized xyxy arrays; rejects zero-area boxes."""
    w, h = image_size
    scale = np.array([w, h, w, h], dtype=np.float64)
    hb = np.asarray(gt.human_box.as_tuple(), dtype=np.float64) / scale
    ob = np.asarray(gt.object_box.as_tuple(), dtype=np.float64) / scale
    for name, b in (("human", hb), ("object", ob)):
        if (b[2] - b[0]) * (b[3] - b[1]) <= 0:
            raise ValueError(f"degenerate ground-truth {name} box {b.tolist()}")
    return hb, ob


def pair_cost(query_pred: dict, gt: InteractionPair, image_size: tuple[int, int],
              weights: MatchWeights = MatchWeights()) -> CostBreakdown:
    """Matching cost between one query's predictions and one gt pair.

    query_pred holds numpy views: 'human_box'/'object_box' (normalized
    cxcywh), 'object_probs', 'action_probs'. Class cost is the negative
    predicted probability of the gt object and action; box cost is the mean
    L1 distance over the 8 center-size coordinates of both boxes; iou cost
    sums (1 - generalized IoU) of both boxes.
    """
    gt_h_xyxy, gt_o_xyxy = normalized_gt_boxes(gt, image_size)
    cls_cost = -(float(query_pred["object_probs"][gt.object_class])
                 + float(query_pred["action_probs"][gt.action_class]))
    pred_h = np.asarray(query_pred["human_box"], dtype=np.float64)
    pred_o = np.asarray(query_pred["object_box"], dtype=np.float64)
    gt_h = box_xyxy_to_cxcywh(gt_h_xyxy)
    gt_o = box_xyxy_to_cxcywh(gt_o_xyxy)
    box_cost = float(np.concatenate([np.abs(pred_h - gt_h), np.abs(pred_o - gt_o)]).mean())
    giou_h = float(elementwise_giou(box_cxcywh_to_xyxy(pred_h), gt_h_xyxy))
    giou_o = float(elementwise_giou(box_cxcywh_to_xyxy(pred_o), gt_o_xyxy))
    iou_cost = (1.0 - giou_h) + (1.0 - giou_o)
    total = weights.cls * cls_cost + weights.box * box_cost + weights.iou * iou_cost
    return CostBreakdown(cls_cost=cls_cost, box_cost=box_cost, iou_cost=iou_cost, total=total)


def query_slices(preds: PairPredictions, batch_idx: int) -> list[dict]:
    """Detached numpy views of each query's predictions for one sample."""
    hb = preds.human_boxes[batch_idx].detach().cpu().numpy()
    ob = preds.object_boxes[batch_idx].detach().cpu().numpy()
    op = torch.softmax(preds.object_logits[batch_idx], dim=-1).detach().cpu().numpy()
    ap = torch.softmax(preds.action_logits[batch_idx], dim=-1).detach().cpu().numpy()
    return [
        {"human_box": hb[q], "object_box": ob[q], "object_probs": op[q], "action_probs": ap[q]}
        for q in range(hb.shape[0])
    ]


def build_cost_matrix(preds: PairPredictions, batch_idx: int, gts: list[InteractionPair],
                      image_size: tuple[int, int],
                      weights: MatchWeights = MatchWeights()) -> np.ndarray:
    slices = query_slices(preds, batch_idx)
    cost = np.zeros((len(slices), len(gts)), dtype=np.float64)
    for qi, qp in enumerate(slices):
        for gi, gt in enumerate(gts):
            cost[qi, gi] = pair_cost(qp, gt, image_size, weights).total
    return cost


def hungarian(cost: np.ndarray) -> MatchResult:
    """Minimum-cost assignment of queries (rows) to gt pairs (columns)."""
    cost = np.asarray(cost, dtype=np.float64)
    n_q, n_gt = cost.shape
    if n_gt > n_q:
        raise ValueError(f"cannot match {n_gt} ground-truth pairs onto {n_q} queries")
    if n_gt and not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    if n_gt == 0:
        return MatchResult(assignment=(), unmatched_queries=tuple(range(n_q)))
    rows, cols = linear_sum_assignment(cost)
    assignment = tuple(sorted((int(r), int(c)) for r, c in zip(rows, cols)))
    matched = {r for r, _ in assignment}
    unmatched = tuple(q for q in range(n_q) if q not in matched)
    return MatchResult(assignment=assignment, unmatched_queries=unmatched)


def assignment_cost(cost: np.ndarray, match: MatchResult) -> float:
    return float(sum(cost[q, g] for q, g in match.assignment))


def match_loss(preds: PairPredictions, gts: list[InteractionPair], match: MatchResult,
               image_size: tuple[int, int], no_interaction_index: int,
               weights: MatchWeights = MatchWeights(), batch_idx: int = 0) -> torch.Tensor:
    """Sum of per-pair losses over the assignment.

    Matched queries contribute object and action cross-entropy, mean-L1 box
    distance and (1 - gIoU) of both boxes; unmatched queries contribute only
    cross-entropy pushing their action toward no_interaction.
    """
    hb = preds.human_boxes[batch_idx]
    ob = preds.object_boxes[batch_idx]
    ol = preds.object_logits[batch_idx]
    al = preds.action_logits[batch_idx]
    device, dtype = hb.device, hb.dtype
    total = torch.zeros((), device=device, dtype=dtype)

    if match.assignment:
        w, h = image_size
        q_idx = torch.as_tensor([q for q, _ in match.assignment], device=device)
        gt_h, gt_o = [], []
        for _, g in match.assignment:
            hbx, obx = normalized_gt_boxes(gts[g], image_size)
            gt_h.append(hbx)
            gt_o.append(obx)
        gt_h = torch.as_tensor(np.stack(gt_h), device=device, dtype=dtype)
        gt_o = torch.as_tensor(np.stack(gt_o), device=device, dtype=dtype)
        gt_obj = torch.as_tensor([gts[g].object_class for _, g in match.assignment], device=device)
        gt_act = torch.as_tensor([gts[g].action_class for _, g in match.assignment], device=device)

        ce_obj = F.cross_entropy(ol[q_idx], gt_obj, reduction="sum")
        ce_act = F.cross_entropy(al[q_idx], gt_act, reduction="sum")
        pred_h, pred_o = hb[q_idx], ob[q_idx]
        l1 = torch.cat([
            (pred_h - box_xyxy_to_cxcywh(gt_h)).abs(),
            (pred_o - box_xyxy_to_cxcywh(gt_o)).abs(),
        ], dim=-1).mean(dim=-1).sum()
        giou = (1 - elementwise_giou(box_cxcywh_to_xyxy(pred_h), gt_h)).sum() \
            + (1 - elementwise_giou(box_cxcywh_to_xyxy(pred_o), gt_o)).sum()
        total = total + weights.cls * (ce_obj + ce_act) + weights.box * l1 + weights.iou * giou

    if match.unmatched_queries:
        u_idx = torch.as_tensor(match.unmatched_queries, device=device)
        target = torch.full((len(match.unmatched_queries),), no_interaction_index, device=device)
        total = total + weights.no_interaction * F.cross_entropy(al[u_idx], target, reduction="sum")
    return total


def total_loss(match: torch.Tensor | float, bce: torch.Tensor | float,
               ce: torch.Tensor | float, alpha: float = 0.1, beta: float = 0.5):
    """Weighted objective alpha * match + beta * (bce + ce).

    Returns the scalar (torch if any input is torch) and a LossReport of
    plain floats for logging.
    """
    if alpha < 0 or beta < 0:
        raise ConfigError(f"loss weights must be non-negative, got alpha={alpha} beta={beta}")
    total = alpha * match + beta * (bce + ce)

    def scalar(x):
        return float(x.detach()) if torch.is_tensor(x) else float(x)

    report = LossReport(
        match_loss=scalar(match), bce_loss=scalar(bce), ce_loss=scalar(ce),
        total=scalar(total), alpha=alpha, beta=beta)
    return total, report
