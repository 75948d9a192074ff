import math
from itertools import permutations

import numpy as np
import pytest
import torch

from contactnet.boxes import box_xyxy_to_cxcywh
from contactnet.errors import ConfigError
from contactnet.interaction import PairPredictions
from contactnet.matching import (MatchResult, MatchWeights, assignment_cost,
                                 build_cost_matrix, hungarian, match_loss,
                                 pair_cost, total_loss)
from contactnet.scenes import Box, InteractionPair
from helpers import assert_grad_matches_fd

IMAGE = (128, 128)
NOINT = 8  # index of no_interaction with the default 8-action vocabulary


def norm_cxcywh(box: Box) -> np.ndarray:
    xy = np.asarray(box.as_tuple(), dtype=np.float64)
    xy = xy / np.array([IMAGE[0], IMAGE[1], IMAGE[0], IMAGE[1]])
    return box_xyxy_to_cxcywh(xy)


def make_gt(hbox=Box(16, 16, 64, 64), obox=Box(80, 80, 112, 112),
            obj=2, act=1, parts=frozenset({10})):
    return InteractionPair(human_box=hbox, object_box=obox,
                           object_class=obj, action_class=act,
                           contact_parts=parts)


def make_preds(human_boxes, object_boxes, object_logits, action_logits):
    return PairPredictions(
        human_boxes=torch.as_tensor(np.asarray(human_boxes), dtype=torch.float64)[None],
        object_boxes=torch.as_tensor(np.asarray(object_boxes), dtype=torch.float64)[None],
        object_logits=torch.as_tensor(np.asarray(object_logits), dtype=torch.float64)[None],
        action_logits=torch.as_tensor(np.asarray(action_logits), dtype=torch.float64)[None])


def brute_force_minimum(cost):
    n_q, n_gt = cost.shape
    return min(
        sum(cost[r, j] for j, r in enumerate(rows))
        for rows in permutations(range(n_q), n_gt))


# ----------------------------------------------------------------- pair_cost

def query_pred(hbox, obox, obj_probs, act_probs):
    return {"human_box": norm_cxcywh(hbox), "object_box": norm_cxcywh(obox),
            "object_probs": np.asarray(obj_probs), "action_probs": np.asarray(act_probs)}


def test_pair_cost_perfect_boxes():
    gt = make_gt()
    qp = query_pred(gt.human_box, gt.object_box,
                    np.full(6, 1 / 6), np.full(9, 1 / 9))
    c = pair_cost(qp, gt, IMAGE)
    assert abs(c.box_cost) < 1e-12
    assert abs(c.iou_cost) < 1e-6   # gIoU of identical boxes is 1


def test_pair_cost_disjoint_boxes_giou_negative():
    gt = make_gt(hbox=Box(0, 0, 8, 8), obox=Box(0, 16, 8, 24))
    qp = query_pred(Box(120, 120, 127, 127), Box(120, 100, 127, 108),
                    np.full(6, 1 / 6), np.full(9, 1 / 9))
    c = pair_cost(qp, gt, IMAGE)
    assert c.iou_cost > 2.0  # each disjoint box contributes more than 1


def test_pair_cost_hand_computed_giou():
    # human boxes (0,0,2,2) vs (1,1,3,3): IoU 1/7, gIoU 1/7 - 2/9 = -0.0794
    gt = make_gt(hbox=Box(0, 0, 2, 2), obox=Box(80, 80, 112, 112))
    qp = query_pred(Box(1, 1, 3, 3), gt.object_box,
                    np.full(6, 1 / 6), np.full(9, 1 / 9))
    c = pair_cost(qp, gt, IMAGE)
    giou_h = 1.0 - (c.iou_cost - 0.0)  # object boxes identical: their term is 0
    assert abs(giou_h - (1 / 7 - 2 / 9)) < 1e-4


def test_pair_cost_cls_is_negative_probability_sum():
    gt = make_gt(obj=3, act=0)
    obj_probs = np.linspace(0.05, 0.3, 6)
    act_probs = np.linspace(0.02, 0.2, 9)
    qp = query_pred(gt.human_box, gt.object_box, obj_probs, act_probs)
    c = pair_cost(qp, gt, IMAGE)
    assert abs(c.cls_cost - (-(obj_probs[3] + act_probs[0]))) < 1e-12


def test_pair_cost_total_is_weighted_sum():
    gt = make_gt()
    qp = query_pred(Box(10, 10, 30, 40), Box(50, 60, 90, 100),
                    np.full(6, 1 / 6), np.full(9, 1 / 9))
    w = MatchWeights(cls=2.0, box=3.0, iou=0.5)
    c = pair_cost(qp, gt, IMAGE, w)
    assert abs(c.total - (2.0 * c.cls_cost + 3.0 * c.box_cost + 0.5 * c.iou_cost)) < 1e-12


def test_pair_cost_rejects_degenerate_gt_box():
    gt = InteractionPair(human_box=Box(10, 10, 50, 50), object_box=Box(60, 60, 80, 80),
                         object_class=0, action_class=0, contact_parts=frozenset({1}))
    gt.object_box = Box.__new__(Box)  # bypass Box validation to build a zero-area box
    object.__setattr__(gt.object_box, "x1", 60)
    object.__setattr__(gt.object_box, "y1", 60)
    object.__setattr__(gt.object_box, "x2", 60)
    object.__setattr__(gt.object_box, "y2", 80)
    qp = query_pred(Box(10, 10, 50, 50), Box(1, 1, 2, 2),
                    np.full(6, 1 / 6), np.full(9, 1 / 9))
    with pytest.raises(ValueError, match="degenerate"):
        pair_cost(qp, gt, IMAGE)


# ----------------------------------------------------------------- hungarian

def test_hungarian_identity_matrix():
    cost = np.ones((3, 3)) - np.eye(3)
    m = hungarian(cost)
    assert m.assignment == ((0, 0), (1, 1), (2, 2))
    assert assignment_cost(cost, m) == 0


def test_hungarian_two_by_two():
    cost = np.array([[1.0, 2.0], [2.0, 1.0]])
    m = hungarian(cost)
    assert m.assignment == ((0, 0), (1, 1))
    assert assignment_cost(cost, m) == 2
    assert assignment_cost(cost, m) == brute_force_minimum(cost)


def test_hungarian_matches_brute_force_6x6():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cost = rng.uniform(-5, 5, size=(6, 6))
        m = hungarian(cost)
        assert abs(assignment_cost(cost, m) - brute_force_minimum(cost)) < 1e-9


def test_hungarian_rectangular_with_unmatched():
    rng = np.random.default_rng(1)
    cost = rng.uniform(0, 1, size=(5, 2))
    m = hungarian(cost)
    assert len(m.assignment) == 2
    assert len(m.unmatched_queries) == 3
    qs = [q for q, _ in m.assignment]
    assert len(set(qs)) == 2
    assert abs(assignment_cost(cost, m) - brute_force_minimum(cost)) < 1e-9


def test_hungarian_capacity_error_names_counts():
    with pytest.raises(ValueError, match="3.*2|2.*3"):
        hungarian(np.zeros((2, 3)))


def test_hungarian_constant_shift_invariance():
    rng = np.random.default_rng(2)
    cost = rng.uniform(0, 1, size=(4, 3))
    m1 = hungarian(cost)
    m2 = hungarian(cost + 7.5)
    assert m1.assignment == m2.assignment
    assert abs(assignment_cost(cost + 7.5, m2)
               - (assignment_cost(cost, m1) + 7.5 * 3)) < 1e-9


# ---------------------------------------------------------------- match_loss

def softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def test_match_loss_empty_scene_is_no_interaction_ce():
    action_logits = np.array([[0.3, -0.2, 0.5, 0.1, 0.0, 0.7, -1.0, 0.2, 0.4],
                              [0.0] * 9])
    preds = make_preds(np.full((2, 4), 0.5), np.full((2, 4), 0.5),
                       np.zeros((2, 6)), action_logits)
    m = MatchResult(assignment=(), unmatched_queries=(0, 1))
    w = MatchWeights()
    loss = match_loss(preds, [], m, IMAGE, NOINT, w)
    expected = w.no_interaction * sum(
        -math.log(softmax(row)[NOINT]) for row in action_logits)
    assert abs(float(loss) - expected) < 1e-9


def test_match_loss_perfect_boxes_leave_only_cls_terms():
    gt = make_gt(obj=2, act=1)
    hb = norm_cxcywh(gt.human_box)
    ob = norm_cxcywh(gt.object_box)
    object_logits = np.array([[0.1, 0.3, 2.0, -0.5, 0.0, 0.2]])
    action_logits = np.array([[0.5, 1.5, -0.3, 0.2, 0.0, 0.1, 0.4, -0.2, 0.0]])
    preds = make_preds([hb], [ob], object_logits, action_logits)
    m = MatchResult(assignment=((0, 0),), unmatched_queries=())
    w = MatchWeights()
    loss = match_loss(preds, [gt], m, IMAGE, NOINT, w)
    expected = w.cls * (-math.log(softmax(object_logits[0])[2])
                        - math.log(softmax(action_logits[0])[1]))
    # box/gIoU terms vanish up to the 1e-9 division guard in gIoU
    assert abs(float(loss) - expected) < 1e-6


def test_match_loss_hand_summed_one_gt_two_queries():
    gt = make_gt(hbox=Box(16, 16, 64, 64), obox=Box(80, 80, 112, 112), obj=2, act=1)
    q0_h = Box(20, 12, 60, 70)
    q0_o = Box(76, 84, 108, 116)
    q1_h = Box(0, 0, 32, 32)
    q1_o = Box(96, 0, 128, 32)
    object_logits = np.array([[0.2, -0.1, 1.2, 0.3, 0.0, -0.4],
                              [0.0, 0.5, -0.2, 0.1, 0.3, 0.2]])
    action_logits = np.array([[0.1, 0.9, -0.2, 0.3, 0.0, 0.2, -0.1, 0.4, 0.6],
                              [0.2, -0.3, 0.1, 0.0, 0.4, -0.2, 0.3, 0.1, 1.1]])
    preds = make_preds([norm_cxcywh(q0_h), norm_cxcywh(q1_h)],
                       [norm_cxcywh(q0_o), norm_cxcywh(q1_o)],
                       object_logits, action_logits)
    w = MatchWeights(cls=1.0, box=2.5, iou=1.0, no_interaction=0.2)
    m = MatchResult(assignment=((0, 0),), unmatched_queries=(1,))
    loss = match_loss(preds, [gt], m, IMAGE, NOINT, w)

    # every term summed by hand
    def giou(a, b):
        ax1, ay1, ax2, ay2 = a
        bx1, by1, bx2, by2 = b
        iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
        ih = max(0.0, min(ay2, by2) - max(ay1, by1))
        inter = iw * ih
        union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
        hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
        return inter / union - (hull - union) / hull

    def norm_xyxy(box):
        return [box.x1 / 128, box.y1 / 128, box.x2 / 128, box.y2 / 128]

    ce_obj = -math.log(softmax(object_logits[0])[2])
    ce_act = -math.log(softmax(action_logits[0])[1])
    l1 = np.abs(np.concatenate([
        norm_cxcywh(q0_h) - norm_cxcywh(gt.human_box),
        norm_cxcywh(q0_o) - norm_cxcywh(gt.object_box)])).mean()
    g = (1 - giou(norm_xyxy(q0_h), norm_xyxy(gt.human_box))) \
        + (1 - giou(norm_xyxy(q0_o), norm_xyxy(gt.object_box)))
    unmatched = -math.log(softmax(action_logits[1])[NOINT])
    expected = w.cls * (ce_obj + ce_act) + w.box * l1 + w.iou * g \
        + w.no_interaction * unmatched
    assert abs(float(loss) - expected) < 1e-6


def test_match_loss_gt_order_permutation_invariant():
    rng = np.random.default_rng(3)
    gts = [make_gt(hbox=Box(5, 5, 40, 50), obox=Box(60, 10, 90, 40), obj=1, act=2),
           make_gt(hbox=Box(20, 60, 70, 120), obox=Box(90, 70, 120, 100), obj=4, act=5)]
    preds = make_preds(rng.uniform(0.2, 0.8, (4, 4)), rng.uniform(0.2, 0.8, (4, 4)),
                       rng.normal(size=(4, 6)), rng.normal(size=(4, 9)))
    losses = []
    for order in ([0, 1], [1, 0]):
        gl = [gts[i] for i in order]
        cost = build_cost_matrix(preds, 0, gl, IMAGE)
        m = hungarian(cost)
        losses.append(float(match_loss(preds, gl, m, IMAGE, NOINT)))
    assert abs(losses[0] - losses[1]) < 1e-12


def test_match_loss_box_gradient_matches_fd():
    gt = make_gt()
    hb = torch.tensor([[0.3, 0.3, 0.3, 0.4], [0.6, 0.2, 0.2, 0.2]],
                      dtype=torch.float64, requires_grad=True)
    ob = torch.tensor([[0.7, 0.7, 0.25, 0.25], [0.3, 0.8, 0.1, 0.2]],
                      dtype=torch.float64, requires_grad=True)
    ol = torch.randn(2, 6, dtype=torch.float64)
    al = torch.randn(2, 9, dtype=torch.float64)
    m = MatchResult(assignment=((0, 0),), unmatched_queries=(1,))

    def closure():
        preds = PairPredictions(human_boxes=hb[None], object_boxes=ob[None],
                                object_logits=ol[None], action_logits=al[None])
        return match_loss(preds, [gt], m, IMAGE, NOINT)

    assert_grad_matches_fd(closure, hb, [(0, 0), (0, 2), (0, 3)])
    assert_grad_matches_fd(closure, ob, [(0, 1), (0, 2)])


# ---------------------------------------------------------------- total_loss

def test_total_loss_paper_defaults():
    total, report = total_loss(2.0, 0.4, 0.6)
    assert report.alpha == 0.1 and report.beta == 0.5
    assert abs(float(total) - 0.7) < 1e-9


def test_total_loss_unit_weights():
    total, _ = total_loss(1.0, 1.0, 1.0, alpha=1.0, beta=1.0)
    assert abs(float(total) - 3.0) < 1e-12


def test_total_loss_rejects_negative_weights():
    with pytest.raises(ConfigError):
        total_loss(1.0, 1.0, 1.0, alpha=-0.1)
    with pytest.raises(ConfigError):
        total_loss(1.0, 1.0, 1.0, beta=-1.0)


def test_total_loss_keeps_torch_graph():
    match = torch.tensor(2.0, requires_grad=True)
    total, report = total_loss(match, 0.4, 0.6)
    total.backward()
    assert float(match.grad) == pytest.approx(0.1)
    assert report.total == pytest.approx(0.7)
