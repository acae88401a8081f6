"""Controlled bounding-box regression experiment.

Anchor boxes of several scales and aspect ratios sit on points scattered
over a disk around a fixed target center. Each anchor is regressed to each
unit-area target by plain gradient descent on a chosen loss, and the l1
error to the target is accumulated per iteration and per scatter point into
a ``T x N`` error matrix.

All cases run as one batch of numpy arrays. Points are processed in chunks
that may be spread over worker processes; the per-point reduction always
adds cases in ascending ``(s, i)`` order, so the result does not depend on
chunking or scheduling.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .geom import Box
from .losses import LossKind, loss_gradient, loss_terms

log = logging.getLogger(__name__)

DEFAULT_SCALES = (0.5, 0.67, 0.75, 1.0, 1.33, 1.5, 2.0)
DEFAULT_RATIOS = (1 / 4, 1 / 3, 1 / 2, 1.0, 2.0, 3.0, 4.0)
MIN_EXTENT = 1e-8
GOLDEN_ANGLE = math.pi * (3 - math.sqrt(5))


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant step size over the iteration horizon.

    ``rates[k]`` applies while ``t <= bounds[k] * T``; the last rate covers
    the remainder.
    """

    rates: tuple = (0.1, 0.01, 0.001)
    bounds: tuple = (0.8, 0.9)

    def __call__(self, t: int, T: int) -> float:
        for rate, bound in zip(self.rates, self.bounds):
            if t <= Fraction(str(bound)) * T:
                return rate
        return self.rates[-1]


@dataclass(frozen=True)
class SimulationConfig:
    n_points: int = 5000
    radius: float = 3.0
    center: tuple = (10.0, 10.0)
    scales: tuple = DEFAULT_SCALES
    aspect_ratios: tuple = DEFAULT_RATIOS
    target_ratios: tuple = DEFAULT_RATIOS
    max_iters: int = 200
    loss: LossKind = LossKind.DIOU
    seed: int = 0
    # DIoU/CIoU: no gradient through the enclosing diagonal (see regress)
    hold_diagonal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        for name in ("scales", "aspect_ratios", "target_ratios"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
                raise ValueError(f"{name} must be a non-empty list of positive numbers")
            object.__setattr__(self, name, values)
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if len(self.center) != 2:
            raise ValueError("center must be an (x, y) pair")

    @property
    def n_cases(self) -> int:
        return self.n_points * len(self.scales) * len(self.aspect_ratios) * len(self.target_ratios)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.value
        return d


def box_dims(area, ratio):
    """Width and height of a box with the given area and ``w / h`` ratio."""
    return math.sqrt(area * ratio), math.sqrt(area / ratio)


def scatter_points(n_points: int, radius: float, center=(0.0, 0.0), seed: int = 0) -> np.ndarray:
    """Near-uniform points on a disk: a sunflower lattice whose rotation
    comes from ``seed``. Point 0 is the center itself."""
    phase = np.random.default_rng(seed).uniform(0.0, 2 * math.pi)
    k = np.arange(n_points)
    r = radius * np.sqrt(k / n_points)
    theta = k * GOLDEN_ANGLE + phase
    return np.column_stack((center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)))


@dataclass(frozen=True)
class CaseSet:
    """All regression cases of a config, indexed by ``(n, s, i)``.

    ``n`` is the scatter point, ``s`` the anchor shape slot (scale-major,
    then aspect ratio) and ``i`` the target.
    """

    points: np.ndarray
    anchor_dims: np.ndarray
    target_dims: np.ndarray
    center: tuple

    def __len__(self) -> int:
        return len(self.points) * len(self.anchor_dims) * len(self.target_dims)

    @property
    def slots(self) -> int:
        return len(self.anchor_dims) * len(self.target_dims)

    def case(self, n: int, s: int, i: int) -> tuple[Box, Box]:
        (px, py), (aw, ah), (tw, th) = self.points[n], self.anchor_dims[s], self.target_dims[i]
        return Box(px, py, aw, ah), Box(*self.center, tw, th)

    def arrays(self, lo: int = 0, hi: int | None = None):
        """Anchor and target arrays of shape ``(slots, points)`` for points ``lo:hi``."""
        pts = self.points[lo:hi]
        n_s, n_i, n_p = len(self.anchor_dims), len(self.target_dims), len(pts)
        shape = (n_s * n_i, n_p)

        def spread(per_slot):
            return np.broadcast_to(per_slot[:, None], shape).copy()

        aw = spread(np.repeat(self.anchor_dims[:, 0], n_i))
        ah = spread(np.repeat(self.anchor_dims[:, 1], n_i))
        tw = spread(np.tile(self.target_dims[:, 0], n_s))
        th = spread(np.tile(self.target_dims[:, 1], n_s))
        ax = np.broadcast_to(pts[:, 0], shape).copy()
        ay = np.broadcast_to(pts[:, 1], shape).copy()
        tx = np.full(shape, self.center[0])
        ty = np.full(shape, self.center[1])
        return (ax, ay, aw, ah), (tx, ty, tw, th)


def generate_cases(cfg: SimulationConfig) -> CaseSet:
    anchors = [box_dims(a, r) for a in cfg.scales for r in cfg.aspect_ratios]
    targets = [box_dims(1.0, r) for r in cfg.target_ratios]
    return CaseSet(
        points=scatter_points(cfg.n_points, cfg.radius, cfg.center, cfg.seed),
        anchor_dims=np.array(anchors, dtype=float),
        target_dims=np.array(targets, dtype=float),
        center=cfg.center,
    )


@dataclass
class RegressionStats:
    steps: int = 0
    clamp_events: int = 0
    loss_increases: int = 0
    loss_increases_unclamped: int = 0

    def merge(self, other: "RegressionStats") -> None:
        self.steps += other.steps
        self.clamp_events += other.clamp_events
        self.loss_increases += other.loss_increases
        self.loss_increases_unclamped += other.loss_increases_unclamped


@dataclass
class RegressionResult:
    final: tuple
    stats: RegressionStats
    trace: np.ndarray | None = None


def l1_error(boxes, targets):
    return sum(np.abs(b - g) for b, g in zip(boxes, targets))


def regress(anchors, targets, kind, T: int, schedule: StepSchedule = StepSchedule(),
            on_step=None, record: bool = False, hold_diagonal: bool = True) -> RegressionResult:
    """Gradient descent of every anchor towards its own target.

    ``anchors`` and ``targets`` are ``(x, y, w, h)`` tuples of equal-shape
    arrays. After step ``t`` (1-based) ``on_step(t, err)`` receives the l1
    error of each iterate. With ``record`` the errors are also returned as
    a ``(T, *shape)`` trace.

    ``hold_diagonal`` keeps the DIoU/CIoU distance term from resizing the
    box, so it moves the center straight at the target. The exact gradient
    also grows the box to stretch the enclosing diagonal, which strands many
    shape-mismatched cases in containment; pass ``False`` to get it anyway.

    A loss increase counts when the new loss exceeds the old by more than
    1e-12; increases on steps that hit the extent floor are tallied apart.
    """
    kind = LossKind.parse(kind)
    box = [np.array(a, dtype=float) for a in anchors]
    targets = tuple(np.asarray(g, dtype=float) for g in targets)
    stats = RegressionStats()
    trace = np.empty((T,) + box[0].shape) if record else None

    prev_loss, iou, _ = loss_terms(kind, box, targets)
    for t in range(1, T + 1):
        eta = schedule(t, T)
        grad = loss_gradient(kind, box, targets, hold_diagonal)
        scale = eta * (2.0 - iou)
        box = [b - scale * g for b, g in zip(box, grad)]
        clamped = (box[2] < MIN_EXTENT) | (box[3] < MIN_EXTENT)
        box[2] = np.maximum(box[2], MIN_EXTENT)
        box[3] = np.maximum(box[3], MIN_EXTENT)

        err = l1_error(box, targets)
        if record:
            trace[t - 1] = err
        if on_step is not None:
            on_step(t, err)

        cur_loss, iou, _ = loss_terms(kind, box, targets)
        rose = cur_loss > prev_loss + 1e-12
        stats.steps += rose.size
        stats.clamp_events += int(np.count_nonzero(clamped))
        stats.loss_increases += int(np.count_nonzero(rose))
        stats.loss_increases_unclamped += int(np.count_nonzero(rose & ~clamped))
        prev_loss = cur_loss

    return RegressionResult(final=tuple(box), stats=stats, trace=trace)


@dataclass(frozen=True)
class CaseResult:
    trace: np.ndarray
    final: Box


def run_case(anchor: Box, target: Box, kind, T: int,
             schedule: StepSchedule = StepSchedule(), hold_diagonal: bool = True) -> CaseResult:
    res = regress(anchor.as_tuple(), target.as_tuple(), kind, T, schedule,
                  record=True, hold_diagonal=hold_diagonal)
    return CaseResult(trace=res.trace, final=Box(*(float(v) for v in res.final)))


@dataclass
class ErrorMatrix:
    """Regression error ``E[t - 1, n]`` summed over the cases at point ``n``."""

    values: np.ndarray
    stats: RegressionStats = field(default_factory=RegressionStats)

    @property
    def shape(self):
        return self.values.shape

    def curve(self) -> np.ndarray:
        """Total error over all points at each iteration."""
        return self.values.sum(axis=1)

    def final(self) -> np.ndarray:
        return self.values[-1]


def _simulate_chunk(cfg: SimulationConfig, cases: CaseSet, lo: int, hi: int):
    anchors, targets = cases.arrays(lo, hi)
    out = np.zeros((cfg.max_iters, hi - lo))

    def accumulate(t, err):
        row = out[t - 1]
        for slot in err:
            row += slot

    res = regress(anchors, targets, cfg.loss, cfg.max_iters, on_step=accumulate,
                  hold_diagonal=cfg.hold_diagonal)
    return out, res.stats


def simulate(cfg: SimulationConfig, workers: int = 1, chunk_points: int = 256) -> ErrorMatrix:
    cases = generate_cases(cfg)
    bounds = [(lo, min(lo + chunk_points, cfg.n_points))
              for lo in range(0, cfg.n_points, chunk_points)]
    log.info("simulating %d cases (%s loss, T=%d) in %d chunks",
             cfg.n_cases, cfg.loss.value, cfg.max_iters, len(bounds))

    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunk, cfg, cases, lo, hi) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    else:
        parts = [_simulate_chunk(cfg, cases, lo, hi) for lo, hi in bounds]

    values = np.concatenate([p[0] for p in parts], axis=1)
    stats = RegressionStats()
    for _, s in parts:
        stats.merge(s)
    if stats.loss_increases:
        log.info("%d of %d steps raised the loss (%d on clamped steps)",
                 stats.loss_increases, stats.steps,
                 stats.loss_increases - stats.loss_increases_unclamped)
    return ErrorMatrix(values=values, stats=stats)


def final_error_surface(E: ErrorMatrix, points) -> list[tuple[float, float, float]]:
    pts = np.asarray(points, dtype=float)
    final = E.final()
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) != len(final):
        raise ValueError(f"expected {len(final)} (x, y) points, got array of shape {pts.shape}")
    return [(float(x), float(y), float(e)) for (x, y), e in zip(pts, final)]
