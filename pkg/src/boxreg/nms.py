"""Greedy non-maximum suppression with IoU or DIoU criteria.

Detections are handled per class, highest score first; equal scores go by
input position. A candidate is dropped by the first already-kept detection
whose criterion reaches the threshold:

* classic: ``IoU(M, B) >= eps``
* diou:    ``IoU(M, B) - d**2 / c**2 >= eps``

where ``d`` is the center distance and ``c`` the enclosing-box diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import Box, pair_stats

DEFAULT_EPS = 0.45


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    class_id: int = 0

    def __post_init__(self):
        score = float(self.score)
        if not math.isfinite(score) or not 0.0 <= score <= 1.0:
            raise ValueError(f"score must be a finite number in [0, 1], got {self.score!r}")
        if isinstance(self.class_id, bool) or int(self.class_id) != self.class_id or self.class_id < 0:
            raise ValueError(f"class_id must be a non-negative integer, got {self.class_id!r}")
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "class_id", int(self.class_id))


@dataclass(frozen=True)
class NmsOutcome:
    kept: list[Detection]
    kept_indices: list[int]
    # (suppressed index, suppressor index), both into the input list
    suppressed: list[tuple[int, int]] = field(default_factory=list)

    @property
    def suppressed_indices(self) -> set[int]:
        return {i for i, _ in self.suppressed}


def _stack(boxes):
    return np.array([b.as_tuple() for b in boxes], dtype=float).reshape(-1, 4).T


def iou_matrix(ms, bs):
    """``IoU(ms[j], bs[i])`` for every pair, as a ``(len(ms), len(bs))`` array."""
    m, b = _stack(ms), _stack(bs)
    inter, union, *_ = pair_stats(tuple(m[:, :, None]), tuple(b[:, None, :]))
    return inter / union


def diou_matrix(ms, bs):
    m, b = _stack(ms), _stack(bs)
    inter, union, _, diag_sq, dist_sq = pair_stats(tuple(m[:, :, None]), tuple(b[:, None, :]))
    return inter / union - dist_sq / diag_sq


def iou_criterion(m: Box, b: Box) -> float:
    return float(iou_matrix([m], [b])[0, 0])


def diou_criterion(m: Box, b: Box) -> float:
    return float(diou_matrix([m], [b])[0, 0])


CRITERIA = {"classic": iou_matrix, "diou": diou_matrix}


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")


def greedy_nms(dets, eps: float, criterion) -> NmsOutcome:
    """Greedy NMS where ``criterion(ms, bs)`` returns the pairwise matrix of
    suppression scores, like :func:`iou_matrix`."""
    _check_eps(eps)
    dets = list(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))

    by_class: dict[int, list[int]] = {}
    for i in order:
        by_class.setdefault(dets[i].class_id, []).append(i)

    kept_indices, suppressed = [], []
    for members in by_class.values():
        boxes = [dets[i].box for i in members]
        hits = criterion(boxes, boxes) >= eps
        kept = []
        for pos, i in enumerate(members):
            # first kept detection, in score order, that reaches the threshold
            hit = next((k for k in kept if hits[k, pos]), None)
            if hit is None:
                kept.append(pos)
            else:
                suppressed.append((i, members[hit]))
        kept_indices.extend(members[k] for k in kept)

    rank = {i: r for r, i in enumerate(order)}
    kept_indices.sort(key=rank.__getitem__)
    suppressed.sort(key=lambda pair: rank[pair[0]])
    return NmsOutcome(
        kept=[dets[i] for i in kept_indices],
        kept_indices=kept_indices,
        suppressed=suppressed,
    )


def nms_classic(dets, eps: float = DEFAULT_EPS) -> NmsOutcome:
    return greedy_nms(dets, eps, iou_matrix)


def nms_diou(dets, eps: float = DEFAULT_EPS) -> NmsOutcome:
    return greedy_nms(dets, eps, diou_matrix)


def run_nms(dets, mode: str = "classic", eps: float = DEFAULT_EPS) -> NmsOutcome:
    try:
        criterion = CRITERIA[mode]
    except KeyError:
        raise ValueError(f"unknown NMS mode {mode!r}; expected classic or diou") from None
    return greedy_nms(dets, eps, criterion)
