import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from contactnet.boxes import (EnclosingRect, box_cxcywh_to_xyxy,
                              box_xyxy_to_cxcywh, elementwise_giou,
                              elementwise_iou, enclosing_rectangle,
                              pairwise_iou, scale_boxes_to_pixels,
                              scale_to_grid)
from contactnet.scenes import Box


def random_boxes(rng, n, size=128):
    out = []
    for _ in range(n):
        x1, y1 = rng.uniform(0, size - 2, 2)
        out.append(Box(x1, y1, x1 + rng.uniform(1, size - x1 - 1),
                       y1 + rng.uniform(1, size - y1 - 1)))
    return out


def corner_scan_oracle(boxes):
    """Brute-force scan over every corner coordinate."""
    xs1 = [b.x1 for b in boxes]
    ys1 = [b.y1 for b in boxes]
    xs2 = [b.x2 for b in boxes]
    ys2 = [b.y2 for b in boxes]
    return (min(xs1), min(ys1), max(xs2), max(ys2))


def test_enclosing_single_box():
    r = enclosing_rectangle([Box(10, 20, 50, 60)], [])
    assert r.as_tuple() == (10, 20, 50, 60)


def test_enclosing_two_boxes():
    r = enclosing_rectangle([Box(0, 0, 10, 10)], [Box(5, 5, 30, 40)])
    assert r.as_tuple() == (0, 0, 30, 40)


def test_enclosing_empty_signals_none():
    assert enclosing_rectangle([], []) is None


def test_enclosing_matches_corner_scan():
    rng = np.random.default_rng(0)
    for _ in range(50):
        humans = random_boxes(rng, int(rng.integers(1, 11)))
        objects = random_boxes(rng, int(rng.integers(0, 11)))
        r = enclosing_rectangle(humans, objects)
        assert r.as_tuple() == corner_scan_oracle(humans + objects)


def test_enclosing_permutation_and_swap_invariant():
    rng = np.random.default_rng(1)
    humans = random_boxes(rng, 4)
    objects = random_boxes(rng, 3)
    base = enclosing_rectangle(humans, objects)
    assert enclosing_rectangle(humans[::-1], objects[::-1]) == base
    assert enclosing_rectangle(objects, humans) == base
    mixed = humans[:2] + objects
    rest = humans[2:]
    assert enclosing_rectangle(mixed, rest) == base


def test_scale_to_grid_exact_multiples():
    g = scale_to_grid(EnclosingRect(64, 64, 128, 128), grid_w=4, grid_h=4)
    assert (g.gx_min, g.gy_min, g.gx_max, g.gy_max) == (2, 2, 4, 4)


def test_scale_to_grid_subcell_box():
    g = scale_to_grid(EnclosingRect(1, 1, 2, 2), grid_w=4, grid_h=4)
    assert (g.gx_min, g.gy_min, g.gx_max, g.gy_max) == (0, 0, 1, 1)


@settings(max_examples=200, deadline=None)
@given(
    x1=st.floats(0, 126), y1=st.floats(0, 126),
    dw=st.floats(0.5, 127), dh=st.floats(0.5, 127),
)
def test_scale_to_grid_covers_every_pixel(x1, y1, dw, dh):
    x2, y2 = min(x1 + dw, 128.0), min(y1 + dh, 128.0)
    rect = EnclosingRect(x1, y1, x2, y2)
    g = scale_to_grid(rect, grid_w=4, grid_h=4)
    assert g.gx_min * 32 <= x1 and g.gy_min * 32 <= y1
    assert g.gx_max * 32 >= x2 and g.gy_max * 32 >= y2
    assert g.gx_max > g.gx_min and g.gy_max > g.gy_min


def test_scale_to_grid_coverage_random_rects():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        x1, y1 = rng.uniform(0, 127, 2)
        x2 = rng.uniform(x1 + 0.1, 128)
        y2 = rng.uniform(y1 + 0.1, 128)
        g = scale_to_grid(EnclosingRect(x1, y1, x2, y2), grid_w=4, grid_h=4)
        assert g.gx_min * 32 <= x1 and g.gx_max * 32 >= x2
        assert g.gy_min * 32 <= y1 and g.gy_max * 32 >= y2


def test_cxcywh_full_image_box():
    xyxy = box_cxcywh_to_xyxy(np.array([0.5, 0.5, 1.0, 1.0]))
    np.testing.assert_allclose(xyxy, [0, 0, 1, 1])
    np.testing.assert_allclose(
        scale_boxes_to_pixels(xyxy, 128, 96), [0, 0, 128, 96])


def test_box_conversion_roundtrip():
    rng = np.random.default_rng(3)
    boxes = rng.uniform(0.1, 0.9, size=(50, 4))
    back = box_xyxy_to_cxcywh(box_cxcywh_to_xyxy(boxes))
    np.testing.assert_allclose(back, boxes, atol=1e-6)
    t = torch.rand(20, 4, dtype=torch.float64)
    back_t = box_xyxy_to_cxcywh(box_cxcywh_to_xyxy(t))
    assert torch.allclose(back_t, t, atol=1e-6)


def test_giou_hand_case():
    a = np.array([0.0, 0.0, 2.0, 2.0])
    b = np.array([1.0, 1.0, 3.0, 3.0])
    iou = elementwise_iou(a, b)
    giou = elementwise_giou(a, b)
    assert abs(iou - 1 / 7) < 1e-6
    assert abs(giou - (1 / 7 - 2 / 9)) < 1e-4
    assert abs(giou - (-0.0794)) < 1e-4


def test_giou_disjoint_boxes_negative():
    a = np.array([0.0, 0.0, 1.0, 1.0])
    b = np.array([10.0, 10.0, 11.0, 11.0])
    assert elementwise_iou(a, b) == 0
    assert elementwise_giou(a, b) < 0
    assert 1 - elementwise_giou(a, b) > 1


def test_pairwise_iou_matches_elementwise():
    rng = np.random.default_rng(4)
    # sorting corner pairs per axis yields valid (x1, y1, x2, y2)
    a = np.sort(rng.uniform(0, 100, size=(6, 2, 2)), axis=1).reshape(6, 4)
    b = np.sort(rng.uniform(0, 100, size=(5, 2, 2)), axis=1).reshape(5, 4)
    mat = pairwise_iou(a, b)
    for i in range(6):
        for j in range(5):
            assert abs(mat[i, j] - elementwise_iou(a[i], b[j])) < 1e-9
