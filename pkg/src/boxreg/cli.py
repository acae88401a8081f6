"""Command-line entry point: ``boxreg simulate | loss | nms``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .detfile import DetectionFileError, read_detections, write_detections
from .geom import Box, InvalidBoxError
from .losses import LossKind, gradient, loss
from .nms import DEFAULT_EPS, run_nms
from .simulator import SimulationConfig, final_error_surface, generate_cases, simulate

log = logging.getLogger("boxreg")

CURVE_HEADER = ("iter", "total_error")
SURFACE_HEADER = ("x", "y", "final_error")


def fmt(value: float) -> str:
    return f"{value + 0.0:.12g}"


def _box(parser, name, values):
    try:
        return Box(*values)
    except InvalidBoxError as exc:
        parser.error(f"--{name}: {exc}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _eps(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"eps must lie in (0, 1), got {text}")
    return value


def write_curve(path, curve) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for t, total in enumerate(curve, start=1):
            writer.writerow((t, fmt(total)))


def write_surface(path, surface) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SURFACE_HEADER)
        for x, y, e in surface:
            writer.writerow((fmt(x), fmt(y), fmt(e)))


def cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        n_points=args.points,
        radius=args.radius,
        center=tuple(args.center),
        max_iters=args.iters,
        loss=args.loss,
        seed=args.seed,
        hold_diagonal=not args.exact_diagonal,
    )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return 1

    E = simulate(cfg, workers=args.workers)
    points = generate_cases(cfg).points
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "n_cases": cfg.n_cases,
        "full_scale": cfg == replace(SimulationConfig(), loss=cfg.loss, seed=cfg.seed,
                                      hold_diagonal=cfg.hold_diagonal),
        "stats": vars(E.stats),
        "files": ["curve.csv", "surface.csv"],
    }
    try:
        write_curve(out / "curve.csv", E.curve())
        write_surface(out / "surface.csv", final_error_surface(E, points))
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        print(f"error: writing results to {out} failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'curve.csv'} ({cfg.max_iters} rows) and "
          f"{out / 'surface.csv'} ({cfg.n_points} rows)")
    return 0


def cmd_loss(args, parser) -> int:
    pred = _box(parser, "pred", args.pred)
    target = _box(parser, "target", args.target)
    value = loss(args.kind, pred, target)
    print(f"loss = {fmt(value.loss)}")
    print(f"iou = {fmt(value.iou)}")
    print(f"penalty = {fmt(value.penalty)}")
    if args.grad:
        g = gradient(args.kind, pred, target)
        for name in ("dx", "dy", "dw", "dh"):
            print(f"{name} = {fmt(getattr(g, name))}")
    return 0


def cmd_nms(args) -> int:
    try:
        dets = read_detections(args.input)
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return 1
    except DetectionFileError as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return 1

    outcome = run_nms(dets, args.mode, args.eps)
    per_class: dict[str, dict[str, int]] = {}
    for det in outcome.kept:
        per_class.setdefault(str(det.class_id), {"kept": 0, "suppressed": 0})["kept"] += 1
    for i, _ in outcome.suppressed:
        per_class.setdefault(str(dets[i].class_id), {"kept": 0, "suppressed": 0})["suppressed"] += 1
    report = {
        "mode": args.mode,
        "eps": args.eps,
        "input_count": len(dets),
        "kept_count": len(outcome.kept),
        "suppressed_count": len(outcome.suppressed),
        "kept_indices": outcome.kept_indices,
        "suppressed": [list(pair) for pair in outcome.suppressed],
        "per_class": dict(sorted(per_class.items(), key=lambda kv: int(kv[0]))),
    }
    text = json.dumps(report, indent=2) + "\n"
    try:
        write_detections(args.out, outcome.kept)
        if args.report:
            Path(args.report).write_text(text)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxreg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in LossKind]

    sim = sub.add_parser("simulate", help="run the bounding-box regression simulation")
    sim.add_argument("--loss", choices=kinds, default="diou")
    sim.add_argument("--points", type=_positive_int, default=5000)
    sim.add_argument("--radius", type=_positive_float, default=3.0)
    sim.add_argument("--center", type=float, nargs=2, default=(10.0, 10.0), metavar=("X", "Y"))
    sim.add_argument("--iters", type=_positive_int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=_positive_int, default=1)
    sim.add_argument("--exact-diagonal", action="store_true",
                     help="let DIoU/CIoU gradients flow through the enclosing diagonal")
    sim.add_argument("--out", required=True, help="output directory")

    ls = sub.add_parser("loss", help="evaluate a loss (and its gradient) for one box pair")
    ls.add_argument("--kind", choices=kinds, required=True)
    ls.add_argument("--pred", type=float, nargs=4, required=True, metavar=("X", "Y", "W", "H"))
    ls.add_argument("--target", type=float, nargs=4, required=True, metavar=("X", "Y", "W", "H"))
    ls.add_argument("--grad", action="store_true", help="also print d loss / d (x, y, w, h)")

    nm = sub.add_parser("nms", help="run NMS on a JSON detection file")
    nm.add_argument("input")
    nm.add_argument("--mode", choices=["classic", "diou"], default="classic")
    nm.add_argument("--eps", type=_eps, default=DEFAULT_EPS)
    nm.add_argument("--out", required=True, help="where to write the kept detections")
    nm.add_argument("--report", help="also write the suppression report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "loss":
        return cmd_loss(args, parser)
    return cmd_nms(args)


if __name__ == "__main__":
    sys.exit(main())
