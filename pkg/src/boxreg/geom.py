"""Axis-aligned rectangle kernels in center parameterization.

Boxes are ``(x, y, w, h)`` with ``(x, y)`` the center. The array kernels
accept anything numpy broadcasts (scalars or arrays of equal shape), which
lets the loss functions and the batched simulator share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidBoxError(ValueError):
    """Raised for boxes with non-finite fields or non-positive extent."""


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidBoxError(f"box field {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box needs w > 0 and h > 0, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "Box":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x - self.w / 2, self.y - self.h / 2,
                self.x + self.w / 2, self.y + self.h / 2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def shifted(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, k: float) -> "Box":
        return Box(k * self.x, k * self.y, k * self.w, k * self.h)


@dataclass(frozen=True)
class EnclosureStats:
    inter_area: float
    union_area: float
    enclose_area: float
    enclose_diag_sq: float
    center_dist_sq: float


def to_corners(x, y, w, h):
    return x - w / 2, y - h / 2, x + w / 2, y + h / 2


def overlap_extent(lo_a, hi_a, lo_b, hi_b):
    """Length of the overlap of two intervals, clipped at zero."""
    return np.maximum(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b), 0.0)


def cover_extent(lo_a, hi_a, lo_b, hi_b):
    return np.maximum(hi_a, hi_b) - np.minimum(lo_a, lo_b)


def pair_stats(a, b):
    """Array form of :func:`enclosure_stats`.

    All areas come from the same rounded corners, so identical boxes give
    exactly equal intersection, union and enclosure, and IoU never exceeds 1.

    ``a`` and ``b`` are ``(x, y, w, h)`` tuples of scalars or arrays.
    Returns ``(inter, union, enclose, diag_sq, dist_sq)``.
    """
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ax1, ay1, ax2, ay2 = to_corners(ax, ay, aw, ah)
    bx1, by1, bx2, by2 = to_corners(bx, by, bw, bh)

    inter = overlap_extent(ax1, ax2, bx1, bx2) * overlap_extent(ay1, ay2, by1, by2)
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    cw = cover_extent(ax1, ax2, bx1, bx2)
    ch = cover_extent(ay1, ay2, by1, by2)
    dist_sq = (ax - bx) ** 2 + (ay - by) ** 2
    return inter, union, cw * ch, cw ** 2 + ch ** 2, dist_sq


def intersection_area(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    return float(overlap_extent(ax1, ax2, bx1, bx2) * overlap_extent(ay1, ay2, by1, by2))


def enclosure_stats(a: Box, b: Box) -> EnclosureStats:
    return EnclosureStats(*(float(v) for v in pair_stats(a.as_tuple(), b.as_tuple())))


def iou(a: Box, b: Box) -> float:
    inter, union, *_ = pair_stats(a.as_tuple(), b.as_tuple())
    return float(inter / union)
