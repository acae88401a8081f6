"""IoU-family bounding-box regression losses, a regression simulator and NMS."""

__version__ = "0.1.0"

from .geom import Box, EnclosureStats, InvalidBoxError, enclosure_stats, intersection_area, iou
from .losses import (
    AspectTerm,
    BoxGradient,
    LossKind,
    LossValue,
    aspect_term,
    fd_gradient,
    gradient,
    loss,
)
from .nms import Detection, NmsOutcome, nms_classic, nms_diou
from .simulator import (
    ErrorMatrix,
    SimulationConfig,
    StepSchedule,
    final_error_surface,
    generate_cases,
    run_case,
    simulate,
)

__all__ = [
    "AspectTerm", "Box", "BoxGradient", "Detection", "EnclosureStats", "ErrorMatrix",
    "InvalidBoxError", "LossKind", "LossValue", "NmsOutcome", "SimulationConfig",
    "StepSchedule", "aspect_term", "enclosure_stats", "fd_gradient", "final_error_surface",
    "generate_cases", "gradient", "intersection_area", "iou", "loss", "nms_classic",
    "nms_diou", "run_case", "simulate",
]
