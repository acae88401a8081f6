import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxreg.geom import Box, InvalidBoxError
from boxreg.losses import (
    LossKind,
    aspect_consistency,
    aspect_gradient,
    aspect_term,
    central_difference,
    fd_gradient,
    gradient,
    loss,
    tradeoff_weight,
)
from helpers import rel_err, tie_free_pairs

shapely = pytest.importorskip("shapely")
from shapely.geometry import box as sbox  # noqa: E402

KINDS = list(LossKind)


def oracle_loss(kind, p: Box, g: Box) -> float:
    """Loss from polygon areas and textbook formulas, sharing no code with boxreg."""
    pp, gp = sbox(*p.corners()), sbox(*g.corners())
    union = pp.union(gp)
    iou = pp.intersection(gp).area / union.area
    x1, y1, x2, y2 = union.bounds
    c_area = (x2 - x1) * (y2 - y1)
    c_diag = (x2 - x1) ** 2 + (y2 - y1) ** 2
    dist = (p.x - g.x) ** 2 + (p.y - g.y) ** 2
    if kind is LossKind.IOU:
        return 1 - iou
    if kind is LossKind.GIOU:
        return 1 - iou + (c_area - union.area) / c_area
    out = 1 - iou + dist / c_diag
    if kind is LossKind.CIOU:
        v = 4 / math.pi ** 2 * (math.atan(g.w / g.h) - math.atan(p.w / p.h)) ** 2
        alpha = 0.0 if v == 0 else v / ((1 - iou) + v)
        out += alpha * v
    return out


coord = st.floats(-20, 20)
extent = st.floats(0.05, 10)
boxes = st.builds(Box, coord, coord, extent, extent)


@pytest.mark.parametrize("kind", KINDS)
def test_perfect_match_is_zero(kind):
    b = Box(3.5, -1.25, 2.0, 0.7)
    v = loss(kind, b, b)
    assert v.loss == 0 and v.iou == 1 and v.penalty == 0


def test_giou_degrades_to_iou_for_containment():
    pred, target = Box(0, 0, 1, 1), Box(0, 0, 2, 2)
    g, i = loss("giou", pred, target), loss("iou", pred, target)
    assert g.loss == 0.75
    assert g.loss == i.loss


def test_diou_of_concentric_pair_equals_iou():
    # the third pair of the degeneracy figure: all three losses read 0.75
    pred, target = Box(0, 0, 1, 1), Box(0, 0, 2, 2)
    assert loss("diou", pred, target).loss == 0.75


@pytest.mark.parametrize("kind", [LossKind.GIOU, LossKind.DIOU])
def test_far_apart_limit(kind):
    values = [loss(kind, Box(0, 0, 1, 1), Box(t, 0, 1, 1)).loss for t in (10, 1e3, 1e6)]
    assert values[0] < values[1] < values[2] < 2
    assert values[2] > 2 - 1e-3


def test_ciou_equals_diou_for_equal_aspect():
    pred, target = Box(1, 2, 2, 1), Box(2.5, 1.5, 4, 2)
    assert loss("ciou", pred, target).loss == loss("diou", pred, target).loss


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_values_match_polygon_oracle(p, g):
    for kind in KINDS:
        assert loss(kind, p, g).loss == pytest.approx(oracle_loss(kind, p, g), rel=1e-9, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_decomposition_and_ranges(p, g):
    for kind in KINDS:
        v = loss(kind, p, g)
        assert v.loss == 1 - v.iou + v.penalty
        assert 0 <= v.iou <= 1
        assert v.penalty >= 0
    assert 0 <= loss("iou", p, g).loss <= 1
    assert 0 <= loss("giou", p, g).loss < 2
    assert 0 <= loss("diou", p, g).loss < 2
    assert 0 <= loss("ciou", p, g).loss < 3


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_loss_ordering(p, g):
    li, ld, lc = (loss(k, p, g).loss for k in ("iou", "diou", "ciou"))
    assert ld >= li
    if p.x == g.x and p.y == g.y:
        assert ld == li
    elif (p.x - g.x) ** 2 + (p.y - g.y) ** 2 > 0:
        assert loss("diou", p, g).penalty > 0
    assert lc >= ld
    if p.w / p.h == g.w / g.h:
        assert lc == ld


def test_ciou_strictly_above_diou_when_aspect_differs():
    p, g = Box(0, 0, 1, 1), Box(0.2, 0, 2, 1)
    assert loss("ciou", p, g).loss > loss("diou", p, g).loss


def test_aspect_term_examples():
    t = aspect_term(Box(0, 0, 1, 1), Box(0, 0, 4, 1), iou=0.5)
    expected_v = 4 / math.pi ** 2 * (math.atan(4) - math.atan(1)) ** 2
    assert t.v == pytest.approx(expected_v, rel=1e-15)
    assert t.v == pytest.approx(0.1183, abs=1e-4)
    assert t.alpha == pytest.approx(expected_v / (0.5 + expected_v), rel=1e-15)
    # the rounded pair (v = 0.1183, IoU = 0.5) gives 0.1913
    assert float(tradeoff_weight(0.1183, 0.5)) == pytest.approx(0.1913, abs=1e-4)


def test_aspect_term_equal_ratios_and_zero_guard():
    t = aspect_term(Box(0, 0, 2, 1), Box(5, 5, 4, 2), iou=0.3)
    assert t.v == 0 and t.alpha == 0
    t = aspect_term(Box(0, 0, 1, 1), Box(0, 0, 1, 1), iou=1.0)
    assert t.v == 0 and t.alpha == 0


def test_alpha_increases_with_v():
    target = Box(0, 0, 1, 1)
    alphas = [aspect_term(Box(0, 0, r, 1), target, iou=0.4).alpha for r in (1.1, 1.5, 2, 4, 10)]
    assert all(a < b for a, b in zip(alphas, alphas[1:]))
    assert all(0 <= a < 1 for a in alphas)


@pytest.mark.parametrize("kind", KINDS)
def test_rejects_invalid_box(kind):
    with pytest.raises(InvalidBoxError):
        loss(kind, Box(0, 0, 1, 1), (0, 0, 1, 1))
    with pytest.raises(InvalidBoxError):
        gradient(kind, Box(0, 0, 1, 1), None)


def test_loss_kind_parse():
    assert LossKind.parse("GIoU") is LossKind.GIOU
    assert LossKind.parse(LossKind.CIOU) is LossKind.CIOU
    with pytest.raises(ValueError, match="unknown loss kind"):
        LossKind.parse("l2")


def test_iou_gradient_vanishes_when_disjoint():
    g = gradient("iou", Box(0, 0, 1, 1), Box(3, 2, 1, 1))
    assert g.as_array().tolist() == [0, 0, 0, 0]


def test_diou_gradient_pulls_disjoint_center_toward_target():
    pred, target = Box(0, 0, 1, 1), Box(3, 2, 1.5, 0.5)
    g = gradient("diou", pred, target)
    assert g.dx < 0 and g.dy < 0
    step = 1e-3
    moved = Box(pred.x - step * g.dx, pred.y - step * g.dy,
                pred.w - step * g.dw, pred.h - step * g.dh)
    assert loss("diou", moved, target).loss < loss("diou", pred, target).loss


def test_giou_gradient_matches_fd_on_overlapping_pairs(rng):
    for p, g in tie_free_pairs(rng, 500, overlapping=True):
        a = gradient("giou", p, g).as_array()
        f = fd_gradient("giou", p, g, 1e-6).as_array()
        assert rel_err(a, f) < 1e-4


@pytest.mark.parametrize("kind", [LossKind.IOU, LossKind.GIOU, LossKind.DIOU])
def test_gradient_matches_fd_including_disjoint(kind, rng):
    for p, g in tie_free_pairs(rng, 200):
        assert rel_err(gradient(kind, p, g).as_array(), fd_gradient(kind, p, g).as_array()) < 1e-4


def test_fd_at_perfect_match_translation_components_vanish():
    b = Box(1.3, -0.4, 0.9, 1.7)
    for kind in KINDS:
        f = fd_gradient(kind, b, b, 1e-6)
        # the IoU kink makes one-sided slopes cancel in a central difference
        assert abs(f.dx) < 1e-6 and abs(f.dy) < 1e-6


def test_fd_matches_analytic_for_shifted_pair():
    a, b = Box(0, 0, 2, 2), Box(1, 0, 2, 2)
    analytic = gradient("iou", a, b)
    f = fd_gradient("iou", a, b)
    assert rel_err([analytic.dx, analytic.dw], [f.dx, f.dw]) < 1e-4
    assert analytic.dy == 0 and f.dy == 0
    # the y edges coincide, so h sits on a kink: growing h only adds union,
    # shrinking it also loses overlap. Tied edges take the mean of both slopes.
    step = 1e-6
    base = loss("iou", a, b).loss
    shrink = (base - loss("iou", Box(0, 0, 2, 2 - step), b).loss) / step
    grow = (loss("iou", Box(0, 0, 2, 2 + step), b).loss - base) / step
    assert analytic.dh == pytest.approx((shrink + grow) / 2, abs=1e-6)
    assert analytic.dh == pytest.approx(f.dh, abs=1e-6)
    assert grow > 0 > shrink


def test_fd_rejects_oversized_step():
    with pytest.raises(InvalidBoxError):
        fd_gradient("iou", Box(0, 0, 0.5, 1), Box(0, 0, 1, 1), step=0.6)
    with pytest.raises(ValueError):
        fd_gradient("iou", Box(0, 0, 1, 1), Box(0, 0, 1, 1), step=0)


def test_unstabilized_aspect_gradient_matches_fd(rng):
    for p, g in tie_free_pairs(rng, 200):
        f = central_difference(lambda b: float(aspect_consistency(b.w, b.h, g.w, g.h)), p, 1e-6)
        dw, dh = aspect_gradient(p.w, p.h, g.w, g.h, stabilized=False)
        assert f[0] == 0 and f[1] == 0
        assert rel_err([dw, dh], f[2:]) < 1e-6


def test_aspect_gradient_signs():
    # pred too wide for a square target: v drops as w shrinks or h grows
    dw, dh = aspect_gradient(2.0, 1.0, 1.0, 1.0, stabilized=False)
    assert dw > 0 and dh < 0


def test_ciou_gradient_splits_into_diou_part_and_scaled_v_part(rng):
    for p, g in tie_free_pairs(rng, 200):
        lv = loss("ciou", p, g)
        alpha = aspect_term(p, g, lv.iou).alpha
        dw, dh = aspect_gradient(p.w, p.h, g.w, g.h, stabilized=True)
        full = gradient("ciou", p, g).as_array()
        rest = full - np.array([0.0, 0.0, alpha * dw, alpha * dh])
        assert rel_err(rest, fd_gradient("diou", p, g).as_array()) < 1e-4

        fd_v = central_difference(
            lambda b: alpha * float(aspect_consistency(b.w, b.h, g.w, g.h)), p, 1e-6)
        ratio = np.array([alpha * dw, alpha * dh]) / fd_v[2:]
        assert np.all(ratio > 0)
        assert ratio == pytest.approx(p.w ** 2 + p.h ** 2, rel=1e-6)


def test_hold_diagonal_drops_size_pull_of_distance_term(rng):
    for p, g in tie_free_pairs(rng, 100):
        held = gradient("diou", p, g, hold_diagonal=True).as_array()
        plain = gradient("iou", p, g).as_array()
        assert held[2:].tolist() == plain[2:].tolist()
        x1, y1, x2, y2 = (min(p.corners()[0], g.corners()[0]), min(p.corners()[1], g.corners()[1]),
                          max(p.corners()[2], g.corners()[2]), max(p.corners()[3], g.corners()[3]))
        diag = (x2 - x1) ** 2 + (y2 - y1) ** 2
        expected = plain[:2] + 2 * np.array([p.x - g.x, p.y - g.y]) / diag
        assert held[:2] == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_exact_diou_gradient_grows_disjoint_box():
    # the enclosing diagonal term rewards a bigger box when far from the target
    g = gradient("diou", Box(7, 10, 1, 1), Box(10, 10, 1, 1))
    assert g.dw < 0
    assert gradient("diou", Box(7, 10, 1, 1), Box(10, 10, 1, 1), hold_diagonal=True).dw == 0


@pytest.mark.parametrize("k", [1e-3, 1.0, 1e3])
def test_scale_and_translation_invariance(k, rng):
    for _ in range(200):
        p = Box(*rng.uniform(0, 4, 2), *rng.uniform(0.3, 2.5, 2))
        g = Box(*rng.uniform(0, 4, 2), *rng.uniform(0.3, 2.5, 2))
        dx, dy = rng.uniform(-50, 50, 2)
        for kind in KINDS:
            ref = loss(kind, p, g).loss
            assert loss(kind, p.scaled(k), g.scaled(k)).loss == pytest.approx(ref, rel=1e-12)
            assert loss(kind, p.shifted(dx, dy), g.shifted(dx, dy)).loss == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("kind", list(LossKind))
@pytest.mark.parametrize("hold", [False, True])
def test_perfect_match_is_stationary(kind, hold):
    b = Box(1.3, -0.4, 0.9, 1.7)
    assert np.all(gradient(kind, b, b, hold_diagonal=hold).as_array() == 0)
