"""Shared generators and comparisons for the test suite."""

import numpy as np

from boxreg.geom import Box


def random_box(rng, lo=0.0, hi=4.0, size=(0.3, 2.5)):
    return Box(*rng.uniform(lo, hi, 2), *rng.uniform(*size, 2))


def edge_gap(a: Box, b: Box) -> float:
    """Smallest distance between any pair of parallel edges of a and b."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    gaps = [abs(p - q) for p in (ax1, ax2) for q in (bx1, bx2)]
    gaps += [abs(p - q) for p in (ay1, ay2) for q in (by1, by2)]
    return min(gaps)


def tie_free_pairs(rng, n, margin=1e-3, overlapping=None):
    """Random (pred, target) pairs with every edge pair at least ``margin`` apart.

    Aspect ratios are kept apart too, so the CIoU aspect gradient is not
    vanishingly small.
    """
    out = []
    while len(out) < n:
        a, b = random_box(rng), random_box(rng)
        if edge_gap(a, b) < margin:
            continue
        if abs(np.arctan(a.w / a.h) - np.arctan(b.w / b.h)) < margin:
            continue
        ax1, ay1, ax2, ay2 = a.corners()
        bx1, by1, bx2, by2 = b.corners()
        overlap = min(ax2, bx2) > max(ax1, bx1) and min(ay2, by2) > max(ay1, by1)
        if overlapping is not None and overlap != overlapping:
            continue
        out.append((a, b))
    return out


def rel_err(analytic, reference) -> float:
    """Max-norm error of a gradient vector relative to the reference's size."""
    a, f = np.asarray(analytic, dtype=float), np.asarray(reference, dtype=float)
    scale = np.abs(f).max()
    diff = np.abs(a - f).max()
    return float(diff / scale) if scale > 0 else float(diff)
