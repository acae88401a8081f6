"""JSON detection files.

A file holds one top-level array of objects with exactly the keys
``x, y, w, h, score, class_id`` (box in center form). Errors name the
index of the offending record.
"""

from __future__ import annotations

import json
from pathlib import Path

from .geom import Box
from .nms import Detection

FIELDS = ("x", "y", "w", "h", "score", "class_id")


class DetectionFileError(ValueError):
    pass


def _iter_records(text: str):
    decoder = json.JSONDecoder()
    ws = " \t\n\r"
    pos = 0
    n = len(text)

    def skip(p):
        while p < n and text[p] in ws:
            p += 1
        return p

    pos = skip(pos)
    if pos >= n or text[pos] != "[":
        raise DetectionFileError("expected a top-level JSON array")
    pos = skip(pos + 1)
    index = 0
    if pos < n and text[pos] == "]":
        pos += 1
    else:
        while True:
            try:
                obj, pos = decoder.raw_decode(text, pos)
            except json.JSONDecodeError as exc:
                raise DetectionFileError(f"record {index}: invalid JSON ({exc.msg})") from None
            yield index, obj
            index += 1
            pos = skip(pos)
            if pos < n and text[pos] == ",":
                pos = skip(pos + 1)
                continue
            if pos < n and text[pos] == "]":
                pos += 1
                break
            raise DetectionFileError(f"record {index}: expected ',' or ']' after record {index - 1}")
    if skip(pos) != n:
        raise DetectionFileError("trailing content after the top-level array")


def _to_detection(index: int, obj) -> Detection:
    if not isinstance(obj, dict):
        raise DetectionFileError(f"record {index}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(FIELDS))
    if unknown:
        raise DetectionFileError(f"record {index}: unknown field(s) {', '.join(unknown)}")
    missing = [k for k in FIELDS if k not in obj]
    if missing:
        raise DetectionFileError(f"record {index}: missing field(s) {', '.join(missing)}")
    for k in FIELDS:
        v = obj[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DetectionFileError(f"record {index}: field {k} must be a number")
    if not isinstance(obj["class_id"], int):
        raise DetectionFileError(f"record {index}: class_id must be an integer")
    try:
        return Detection(Box(obj["x"], obj["y"], obj["w"], obj["h"]), obj["score"], obj["class_id"])
    except ValueError as exc:
        raise DetectionFileError(f"record {index}: {exc}") from None


def parse_detections(text: str) -> list[Detection]:
    return [_to_detection(i, obj) for i, obj in _iter_records(text)]


def read_detections(path) -> list[Detection]:
    return parse_detections(Path(path).read_text())


def detection_to_dict(det: Detection) -> dict:
    b = det.box
    return {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": det.score, "class_id": det.class_id}


def dump_detections(dets) -> str:
    return json.dumps([detection_to_dict(d) for d in dets], indent=2) + "\n"


def write_detections(path, dets) -> None:
    Path(path).write_text(dump_detections(dets))
