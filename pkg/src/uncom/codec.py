"""Bit-exact JSON serialization for every wire-visible type.

Encoding is canonical: sorted keys, no insignificant whitespace, so the
same value always produces identical bytes. Decoding validates structure
first (schema mismatch) and invariants second, reporting the first
violation together with its JSON path.
"""

from __future__ import annotations

import json
from typing import Any, Callable, TypeVar

from .errors import DecodeError, InvariantError
from .types import (
    SCHEMA_VERSION,
    CommandElements,
    Detection,
    DepthMap,
    EmptyCellTarget,
    FrameRef,
    GroundedCommand,
    HandObservation,
    Landmark,
    Mention,
    ObjectGrounding,
    ObjectTarget,
    PixelMask,
    TableMap,
    Transcript,
    VoronoiCell,
    WordToken,
)

T = TypeVar("T")


def dumps_canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


# --- value -> jsonable ----------------------------------------------------

def to_jsonable(value: Any) -> Any:
    fn = _ENCODERS.get(type(value))
    if fn is None:
        raise TypeError(f"no encoder for {type(value).__name__}")
    return fn(value)


def _enc_word(w: WordToken) -> dict:
    return {"text": w.text, "start": w.start, "end": w.end}


def _enc_transcript(t: Transcript) -> dict:
    return {"language": t.language, "words": [_enc_word(w) for w in t.words]}


def _enc_mention(m: Mention) -> dict:
    out = {"text": m.text, "timespan": list(m.timespan)}
    if m.concrete is not None:
        out["concrete"] = m.concrete
    return out


def _enc_elements(e: CommandElements) -> dict:
    out: dict[str, Any] = {}
    for key in ("object", "action", "target"):
        m = getattr(e, key)
        out[key] = _enc_mention(m) if m is not None else None
    return out


def _enc_landmark(lm: Landmark) -> dict:
    return {"x": lm.x, "y": lm.y, "z": lm.z}


def _enc_hand(h: HandObservation) -> dict:
    out = {
        "landmarks": [_enc_landmark(lm) for lm in h.landmarks],
        "handedness": h.handedness,
    }
    if h.confidence is not None:
        out["confidence"] = h.confidence
    return out


def _enc_detection(d: Detection) -> dict:
    return {
        "label": d.label,
        "bbox": list(d.bbox),
        "score": d.score,
        "frame_id": d.frame_id,
    }


def _enc_mask(m: PixelMask) -> dict:
    return {"width": m.width, "height": m.height, "rle": list(m.rle)}


def _enc_depth(d: DepthMap) -> dict:
    return {"width": d.width, "height": d.height, "values": list(d.values)}


def _enc_grounding(g: ObjectGrounding) -> dict:
    return {
        "name": g.name,
        "bbox": list(g.bbox),
        "mask": _enc_mask(g.mask),
        "frame_id": g.frame_id,
    }


def _enc_target(t: ObjectTarget | EmptyCellTarget) -> dict:
    if isinstance(t, ObjectTarget):
        out = {"kind": "object"}
        out.update(_enc_grounding(t.object))
        return out
    return {
        "kind": "empty_cell",
        "cell_polygon": [list(p) for p in t.cell_polygon],
        "cell_center": list(t.cell_center),
        "frame_id": t.frame_id,
    }


def _enc_command(c: GroundedCommand) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "object": _enc_grounding(c.object),
        "action": c.action,
        "target": _enc_target(c.target),
    }


def _enc_cell(c: VoronoiCell) -> dict:
    out: dict[str, Any] = {
        "site": list(c.site),
        "polygon": [list(p) for p in c.polygon],
        "occupied": c.occupied,
    }
    if c.center_depth is not None:
        out["center_depth"] = c.center_depth
    return out


def _enc_table_map(m: TableMap) -> dict:
    out: dict[str, Any] = {
        "table_bbox": list(m.table_bbox),
        "cells": [_enc_cell(c) for c in m.cells],
    }
    if m.table_mask is not None:
        out["table_mask"] = _enc_mask(m.table_mask)
    return out


def _enc_frame(f: FrameRef) -> dict:
    out: dict[str, Any] = {"frame_id": f.frame_id, "timestamp": f.timestamp}
    if f.image is not None:
        out["image"] = f.image
    return out


_ENCODERS: dict[type, Callable[[Any], Any]] = {
    WordToken: _enc_word,
    Transcript: _enc_transcript,
    Mention: _enc_mention,
    CommandElements: _enc_elements,
    Landmark: _enc_landmark,
    HandObservation: _enc_hand,
    Detection: _enc_detection,
    PixelMask: _enc_mask,
    DepthMap: _enc_depth,
    ObjectGrounding: _enc_grounding,
    ObjectTarget: _enc_target,
    EmptyCellTarget: _enc_target,
    GroundedCommand: _enc_command,
    VoronoiCell: _enc_cell,
    TableMap: _enc_table_map,
    FrameRef: _enc_frame,
}


def encode_json(value: Any) -> bytes:
    """Canonical JSON bytes for any core type."""
    return dumps_canonical(to_jsonable(value))


# --- jsonable -> value ----------------------------------------------------

def _expect(obj: Any, kind: type | tuple[type, ...], path: str, what: str) -> Any:
    if kind is float:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise DecodeError("schema_mismatch", path, f"expected {what}")
        return float(obj)
    if kind is int:
        if isinstance(obj, bool) or not isinstance(obj, int):
            raise DecodeError("schema_mismatch", path, f"expected {what}")
        return obj
    if not isinstance(obj, kind):
        raise DecodeError("schema_mismatch", path, f"expected {what}")
    return obj


def _get(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise DecodeError("schema_mismatch", f"{path}.{key}", "missing required key")
    return obj[key]


def _construct(factory: Callable[[], T], path: str) -> T:
    try:
        return factory()
    except InvariantError as exc:
        raise DecodeError("invariant_violation", path, exc.message) from exc


def _dec_word(obj: Any, path: str) -> WordToken:
    _expect(obj, dict, path, "object")
    text = _expect(_get(obj, "text", path), str, f"{path}.text", "string")
    start = _expect(_get(obj, "start", path), float, f"{path}.start", "number")
    end = _expect(_get(obj, "end", path), float, f"{path}.end", "number")
    return _construct(lambda: WordToken(text, start, end), path)


def _dec_transcript(obj: Any, path: str) -> Transcript:
    _expect(obj, dict, path, "object")
    words_raw = _expect(_get(obj, "words", path), list, f"{path}.words", "array")
    words = tuple(
        _dec_word(w, f"{path}.words[{i}]") for i, w in enumerate(words_raw)
    )
    language = _expect(_get(obj, "language", path), str, f"{path}.language", "string")
    return _construct(lambda: Transcript(words, language), path)


def _dec_timespan(obj: Any, path: str) -> tuple[float, float]:
    _expect(obj, list, path, "array of 2 numbers")
    if len(obj) != 2:
        raise DecodeError("schema_mismatch", path, "expected array of 2 numbers")
    return (
        _expect(obj[0], float, f"{path}[0]", "number"),
        _expect(obj[1], float, f"{path}[1]", "number"),
    )


def _dec_mention(obj: Any, path: str) -> Mention:
    _expect(obj, dict, path, "object")
    text = _expect(_get(obj, "text", path), str, f"{path}.text", "string")
    span = _dec_timespan(_get(obj, "timespan", path), f"{path}.timespan")
    concrete = obj.get("concrete")
    if concrete is not None:
        concrete = _expect(concrete, bool, f"{path}.concrete", "boolean")
    return _construct(lambda: Mention(text, span, concrete), path)


def _dec_elements(obj: Any, path: str) -> CommandElements:
    _expect(obj, dict, path, "object")
    parts: dict[str, Mention | None] = {}
    for key in ("object", "action", "target"):
        raw = obj.get(key)
        parts[key] = None if raw is None else _dec_mention(raw, f"{path}.{key}")
    return _construct(lambda: CommandElements(**parts), path)


def _dec_landmark(obj: Any, path: str) -> Landmark:
    _expect(obj, dict, path, "object")
    x = _expect(_get(obj, "x", path), float, f"{path}.x", "number")
    y = _expect(_get(obj, "y", path), float, f"{path}.y", "number")
    z = _expect(obj.get("z", 0.0), float, f"{path}.z", "number")
    return _construct(lambda: Landmark(x, y, z), path)


def _dec_hand(obj: Any, path: str) -> HandObservation:
    _expect(obj, dict, path, "object")
    lms_raw = _expect(_get(obj, "landmarks", path), list, f"{path}.landmarks", "array")
    landmarks = tuple(
        _dec_landmark(lm, f"{path}.landmarks[{i}]") for i, lm in enumerate(lms_raw)
    )
    handedness = _expect(
        obj.get("handedness", "unknown"), str, f"{path}.handedness", "string"
    )
    confidence = obj.get("confidence")
    if confidence is not None:
        confidence = _expect(confidence, float, f"{path}.confidence", "number")
    return _construct(
        lambda: HandObservation(landmarks, handedness, confidence),
        f"{path}.landmarks",
    )


def _dec_bbox(obj: Any, path: str) -> tuple[float, float, float, float]:
    _expect(obj, list, path, "array of 4 numbers")
    if len(obj) != 4:
        raise DecodeError("schema_mismatch", path, "expected array of 4 numbers")
    return tuple(_expect(v, float, f"{path}[{i}]", "number") for i, v in enumerate(obj))


def _dec_detection(obj: Any, path: str) -> Detection:
    _expect(obj, dict, path, "object")
    label = _expect(_get(obj, "label", path), str, f"{path}.label", "string")
    bbox = _dec_bbox(_get(obj, "bbox", path), f"{path}.bbox")
    score = _expect(_get(obj, "score", path), float, f"{path}.score", "number")
    frame_id = _expect(_get(obj, "frame_id", path), str, f"{path}.frame_id", "string")
    return _construct(lambda: Detection(label, bbox, score, frame_id), f"{path}.bbox")


def _dec_mask(obj: Any, path: str) -> PixelMask:
    _expect(obj, dict, path, "object")
    width = _expect(_get(obj, "width", path), int, f"{path}.width", "integer")
    height = _expect(_get(obj, "height", path), int, f"{path}.height", "integer")
    rle_raw = _expect(_get(obj, "rle", path), list, f"{path}.rle", "array")
    rle = tuple(
        _expect(v, int, f"{path}.rle[{i}]", "integer") for i, v in enumerate(rle_raw)
    )
    return _construct(lambda: PixelMask(width, height, rle), f"{path}.rle")


def _dec_depth(obj: Any, path: str) -> DepthMap:
    _expect(obj, dict, path, "object")
    width = _expect(_get(obj, "width", path), int, f"{path}.width", "integer")
    height = _expect(_get(obj, "height", path), int, f"{path}.height", "integer")
    vals_raw = _expect(_get(obj, "values", path), list, f"{path}.values", "array")
    values = tuple(
        _expect(v, float, f"{path}.values[{i}]", "number")
        for i, v in enumerate(vals_raw)
    )
    return _construct(lambda: DepthMap(width, height, values), f"{path}.values")


def _dec_grounding(obj: Any, path: str) -> ObjectGrounding:
    _expect(obj, dict, path, "object")
    name = _expect(_get(obj, "name", path), str, f"{path}.name", "string")
    bbox = _dec_bbox(_get(obj, "bbox", path), f"{path}.bbox")
    mask = _dec_mask(_get(obj, "mask", path), f"{path}.mask")
    frame_id = _expect(_get(obj, "frame_id", path), str, f"{path}.frame_id", "string")
    return _construct(
        lambda: ObjectGrounding(name, bbox, mask, frame_id), f"{path}.bbox"
    )


def _dec_point2(obj: Any, path: str) -> tuple[float, float]:
    _expect(obj, list, path, "array of 2 numbers")
    if len(obj) != 2:
        raise DecodeError("schema_mismatch", path, "expected array of 2 numbers")
    return (
        _expect(obj[0], float, f"{path}[0]", "number"),
        _expect(obj[1], float, f"{path}[1]", "number"),
    )


def _dec_target(obj: Any, path: str) -> ObjectTarget | EmptyCellTarget:
    _expect(obj, dict, path, "object")
    kind = _expect(_get(obj, "kind", path), str, f"{path}.kind", "string")
    if kind == "object":
        return ObjectTarget(_dec_grounding(obj, path))
    if kind == "empty_cell":
        poly_raw = _expect(
            _get(obj, "cell_polygon", path), list, f"{path}.cell_polygon", "array"
        )
        polygon = tuple(
            _dec_point2(p, f"{path}.cell_polygon[{i}]")
            for i, p in enumerate(poly_raw)
        )
        center = _dec_point2(_get(obj, "cell_center", path), f"{path}.cell_center")
        frame_id = _expect(
            _get(obj, "frame_id", path), str, f"{path}.frame_id", "string"
        )
        return _construct(
            lambda: EmptyCellTarget(polygon, center, frame_id),
            f"{path}.cell_polygon",
        )
    raise DecodeError("schema_mismatch", f"{path}.kind", "expected object|empty_cell")


def _dec_command(obj: Any, path: str) -> GroundedCommand:
    _expect(obj, dict, path, "object")
    schema = _expect(_get(obj, "schema", path), str, f"{path}.schema", "string")
    if schema != SCHEMA_VERSION:
        raise DecodeError(
            "schema_mismatch", f"{path}.schema", f"expected {SCHEMA_VERSION!r}"
        )
    obj_g = _dec_grounding(_get(obj, "object", path), f"{path}.object")
    action = _expect(_get(obj, "action", path), str, f"{path}.action", "string")
    target = _dec_target(_get(obj, "target", path), f"{path}.target")
    return GroundedCommand(obj_g, action, target)


def _dec_cell(obj: Any, path: str) -> VoronoiCell:
    _expect(obj, dict, path, "object")
    site = _dec_point2(_get(obj, "site", path), f"{path}.site")
    poly_raw = _expect(_get(obj, "polygon", path), list, f"{path}.polygon", "array")
    polygon = tuple(
        _dec_point2(p, f"{path}.polygon[{i}]") for i, p in enumerate(poly_raw)
    )
    occupied = _expect(
        _get(obj, "occupied", path), bool, f"{path}.occupied", "boolean"
    )
    depth = obj.get("center_depth")
    if depth is not None:
        depth = _expect(depth, float, f"{path}.center_depth", "number")
    return _construct(
        lambda: VoronoiCell(site, polygon, occupied, depth), f"{path}.polygon"
    )


def _dec_table_map(obj: Any, path: str) -> TableMap:
    _expect(obj, dict, path, "object")
    bbox = _dec_bbox(_get(obj, "table_bbox", path), f"{path}.table_bbox")
    cells_raw = _expect(_get(obj, "cells", path), list, f"{path}.cells", "array")
    cells = tuple(
        _dec_cell(c, f"{path}.cells[{i}]") for i, c in enumerate(cells_raw)
    )
    mask_raw = obj.get("table_mask")
    mask = None if mask_raw is None else _dec_mask(mask_raw, f"{path}.table_mask")
    return _construct(lambda: TableMap(bbox, cells, mask), f"{path}.table_bbox")


def _dec_frame(obj: Any, path: str) -> FrameRef:
    _expect(obj, dict, path, "object")
    frame_id = _expect(_get(obj, "frame_id", path), str, f"{path}.frame_id", "string")
    ts = _expect(_get(obj, "timestamp", path), float, f"{path}.timestamp", "number")
    image = obj.get("image")
    if image is not None:
        image = _expect(image, str, f"{path}.image", "string")
    return _construct(lambda: FrameRef(frame_id, ts, image), path)


_DECODERS: dict[type, Callable[[Any, str], Any]] = {
    WordToken: _dec_word,
    Transcript: _dec_transcript,
    Mention: _dec_mention,
    CommandElements: _dec_elements,
    Landmark: _dec_landmark,
    HandObservation: _dec_hand,
    Detection: _dec_detection,
    PixelMask: _dec_mask,
    DepthMap: _dec_depth,
    ObjectGrounding: _dec_grounding,
    GroundedCommand: _dec_command,
    VoronoiCell: _dec_cell,
    TableMap: _dec_table_map,
    FrameRef: _dec_frame,
}


def decode_jsonable(obj: Any, cls: type[T], path: str = "$") -> T:
    """Decode an already-parsed JSON value into ``cls``."""
    if cls in (ObjectTarget, EmptyCellTarget) or getattr(cls, "__name__", "") == "TargetResult":
        return _dec_target(obj, path)  # type: ignore[return-value]
    fn = _DECODERS.get(cls)
    if fn is None:
        raise TypeError(f"no decoder for {cls.__name__}")
    return fn(obj, path)


def decode_json(data: bytes | str, cls: type[T]) -> T:
    """Decode JSON bytes into ``cls``, validating all invariants."""
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError("malformed_json", "$", f"malformed JSON: {exc.msg}") from exc
    return decode_jsonable(obj, cls)
