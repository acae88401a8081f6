"""IoU, GIoU, DIoU and CIoU losses with analytic gradients.

Every loss has the form ``1 - IoU + penalty``. Gradients are taken with
respect to the predicted box ``(x, y, w, h)`` and point uphill; callers
descend by subtracting them.

The kernels ``loss_terms`` and ``loss_gradient`` work elementwise on numpy
arrays so the simulator can regress many boxes at once. The ``Box``-level
functions are thin wrappers around them.

Two deliberate departures from plain differentiation apply to CIoU only:

* the trade-off weight ``alpha`` is held constant when differentiating;
* the ``1 / (w**2 + h**2)`` factor of the aspect-ratio gradient is dropped.

Both affect :func:`gradient`, never the loss value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geom import Box, InvalidBoxError, cover_extent, overlap_extent, to_corners

ASPECT_SCALE = 4 / math.pi ** 2


class LossKind(str, enum.Enum):
    IOU = "iou"
    GIOU = "giou"
    DIOU = "diou"
    CIOU = "ciou"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown loss kind {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class LossValue:
    loss: float
    iou: float
    penalty: float


@dataclass(frozen=True)
class BoxGradient:
    dx: float
    dy: float
    dw: float
    dh: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh])


@dataclass(frozen=True)
class AspectTerm:
    v: float
    alpha: float


def aspect_consistency(w, h, gw, gh):
    """The ``v`` term: squared arctan gap between the two aspect ratios."""
    return ASPECT_SCALE * (np.arctan(gw / gh) - np.arctan(w / h)) ** 2


def tradeoff_weight(v, iou):
    # alpha is 0/0 at a perfect match; both limits along v -> 0 give 0
    denom = (1.0 - iou) + v
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(v > 0, v / safe, 0.0)


def aspect_gradient(w, h, gw, gh, stabilized=True):
    """Partial derivatives of ``v`` with respect to ``w`` and ``h``.

    With ``stabilized`` the common ``1 / (w**2 + h**2)`` factor is replaced
    by 1, which keeps the direction and avoids blow-up for small boxes.
    """
    gap = np.arctan(gw / gh) - np.arctan(w / h)
    coef = 2 * ASPECT_SCALE * gap
    if not stabilized:
        coef = coef / (w ** 2 + h ** 2)
    return -coef * h, coef * w


def loss_terms(kind, pred, target):
    """Return ``(loss, iou, penalty)`` arrays for the chosen loss.

    ``pred`` and ``target`` are ``(x, y, w, h)`` tuples of arrays.
    """
    kind = LossKind.parse(kind)
    x, y, w, h = (np.asarray(v, dtype=float) for v in pred)
    gx, gy, gw, gh = (np.asarray(v, dtype=float) for v in target)
    px1, py1, px2, py2 = to_corners(x, y, w, h)
    gx1, gy1, gx2, gy2 = to_corners(gx, gy, gw, gh)

    # areas from the rounded corners, consistent with the overlap and cover
    inter = overlap_extent(px1, px2, gx1, gx2) * overlap_extent(py1, py2, gy1, gy2)
    union = (px2 - px1) * (py2 - py1) + (gx2 - gx1) * (gy2 - gy1) - inter
    iou = inter / union

    if kind is LossKind.IOU:
        penalty = np.zeros_like(iou)
    else:
        cw = cover_extent(px1, px2, gx1, gx2)
        ch = cover_extent(py1, py2, gy1, gy2)
        if kind is LossKind.GIOU:
            enclose = cw * ch
            # C >= U geometrically; round-off in U can push it past C
            penalty = np.maximum(enclose - union, 0.0) / enclose
        else:
            penalty = ((x - gx) ** 2 + (y - gy) ** 2) / (cw ** 2 + ch ** 2)
            if kind is LossKind.CIOU:
                v = aspect_consistency(w, h, gw, gh)
                penalty = penalty + tradeoff_weight(v, iou) * v
    return 1.0 - iou + penalty, iou, penalty


def _edge_weight(a, b):
    """1 where ``a > b``, 0 where ``a < b``, 1/2 on a tie."""
    return 0.5 * (np.sign(a - b) + 1.0)


def _overlap_partials(p_lo, p_hi, g_lo, g_hi):
    """Overlap length and its derivatives w.r.t. the pred center and size.

    A tied pred/target edge gets half weight, the mean of the two one-sided
    slopes, so a perfect match is stationary. A zero overlap (disjoint or
    touching) has zero derivative.
    """
    raw = np.minimum(p_hi, g_hi) - np.maximum(p_lo, g_lo)
    live = raw > 0
    hi = live * _edge_weight(g_hi, p_hi)
    lo = live * _edge_weight(p_lo, g_lo)
    return np.maximum(raw, 0.0), hi - lo, 0.5 * (hi + lo)


def _cover_partials(p_lo, p_hi, g_lo, g_hi):
    hi = _edge_weight(p_hi, g_hi)
    lo = _edge_weight(g_lo, p_lo)
    return np.maximum(p_hi, g_hi) - np.minimum(p_lo, g_lo), hi - lo, 0.5 * (hi + lo)


def loss_gradient(kind, pred, target, hold_diagonal=False):
    """Analytic ``d loss / d (x, y, w, h)`` as a tuple of four arrays.

    With ``hold_diagonal`` the enclosing-box diagonal of the DIoU/CIoU
    distance term is treated as a constant, so that term only pulls the
    center and never resizes the box.
    """
    kind = LossKind.parse(kind)
    x, y, w, h = (np.asarray(v, dtype=float) for v in pred)
    gx, gy, gw, gh = (np.asarray(v, dtype=float) for v in target)
    px1, py1, px2, py2 = to_corners(x, y, w, h)
    gx1, gy1, gx2, gy2 = to_corners(gx, gy, gw, gh)

    ow, dow_dx, dow_dw = _overlap_partials(px1, px2, gx1, gx2)
    oh, doh_dy, doh_dh = _overlap_partials(py1, py2, gy1, gy2)
    inter = ow * oh
    d_inter = (dow_dx * oh, doh_dy * ow, dow_dw * oh, doh_dh * ow)

    union = (px2 - px1) * (py2 - py1) + (gx2 - gx1) * (gy2 - gy1) - inter
    d_area = (0.0, 0.0, py2 - py1, px2 - px1)
    d_union = tuple(da - di for da, di in zip(d_area, d_inter))

    # d(1 - IoU) = -(dI * U - I * dU) / U^2
    u2 = union * union
    grad = [-(di * union - inter * du) / u2 for di, du in zip(d_inter, d_union)]
    if kind is LossKind.IOU:
        return tuple(grad)

    cw, dcw_dx, dcw_dw = _cover_partials(px1, px2, gx1, gx2)
    ch, dch_dy, dch_dh = _cover_partials(py1, py2, gy1, gy2)

    if kind is LossKind.GIOU:
        enclose = cw * ch
        d_enclose = (dcw_dx * ch, dch_dy * cw, dcw_dw * ch, dch_dh * cw)
        # penalty = 1 - U / C
        c2 = enclose * enclose
        return tuple(g - (du * enclose - union * dc) / c2
                     for g, du, dc in zip(grad, d_union, d_enclose))

    diag_sq = cw ** 2 + ch ** 2
    d_dist = (2 * (x - gx), 2 * (y - gy), 0.0, 0.0)
    if hold_diagonal:
        grad = [g + dd / diag_sq for g, dd in zip(grad, d_dist)]
    else:
        dist_sq = (x - gx) ** 2 + (y - gy) ** 2
        d_diag = (2 * cw * dcw_dx, 2 * ch * dch_dy, 2 * cw * dcw_dw, 2 * ch * dch_dh)
        q2 = diag_sq * diag_sq
        grad = [g + (dd * diag_sq - dist_sq * dc) / q2
                for g, dd, dc in zip(grad, d_dist, d_diag)]
    if kind is LossKind.DIOU:
        return tuple(grad)

    iou = inter / union
    v = aspect_consistency(w, h, gw, gh)
    alpha = tradeoff_weight(v, iou)
    dv_dw, dv_dh = aspect_gradient(w, h, gw, gh, stabilized=True)
    grad[2] = grad[2] + alpha * dv_dw
    grad[3] = grad[3] + alpha * dv_dh
    return tuple(grad)


def _check_boxes(*boxes):
    for b in boxes:
        if not isinstance(b, Box):
            raise InvalidBoxError(f"expected a Box, got {type(b).__name__}")


def loss(kind, pred: Box, target: Box) -> LossValue:
    _check_boxes(pred, target)
    value, iou, penalty = loss_terms(kind, pred.as_tuple(), target.as_tuple())
    return LossValue(float(value), float(iou), float(penalty))


def aspect_term(pred: Box, target: Box, iou: float) -> AspectTerm:
    v = aspect_consistency(pred.w, pred.h, target.w, target.h)
    return AspectTerm(float(v), float(tradeoff_weight(v, iou)))


def gradient(kind, pred: Box, target: Box, hold_diagonal: bool = False) -> BoxGradient:
    _check_boxes(pred, target)
    grad = loss_gradient(kind, pred.as_tuple(), target.as_tuple(), hold_diagonal)
    return BoxGradient(*(float(g) for g in grad))


def central_difference(func, pred: Box, step: float) -> np.ndarray:
    """Central-difference derivative of ``func(box)`` along x, y, w, h."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if pred.w - step <= 0 or pred.h - step <= 0:
        raise InvalidBoxError(f"step {step} makes the perturbed box degenerate")
    base = np.array(pred.as_tuple())
    out = np.empty(4)
    for j in range(4):
        hi, lo = base.copy(), base.copy()
        hi[j] += step
        lo[j] -= step
        out[j] = (func(Box(*hi)) - func(Box(*lo))) / (2 * step)
    return out


def fd_gradient(kind, pred: Box, target: Box, step: float = 1e-6) -> BoxGradient:
    """Finite-difference check for :func:`gradient`.

    Differentiates the loss value itself, so for CIoU it includes the
    variation of ``alpha`` and the full aspect-ratio derivative.
    """
    _check_boxes(pred, target)
    kind = LossKind.parse(kind)
    g = central_difference(lambda b: loss(kind, b, target).loss, pred, step)
    return BoxGradient(*(float(v) for v in g))
