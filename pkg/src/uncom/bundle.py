"""Perception bundles: the demuxed, perception-annotated form of a command.

A bundle is self-contained: frames are timestamped handles, and every
perception response a command needs can be carried as a recording keyed
by (capability, frame, prompt). Bundles with recordings replay
deterministically through the fixture provider with no model installed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .codec import (
    decode_jsonable,
    dumps_canonical,
    to_jsonable,
)
from .errors import DecodeError
from .types import (
    SCHEMA_VERSION,
    Detection,
    DepthMap,
    FrameRef,
    HandObservation,
    PixelMask,
    Transcript,
)

Z_SIGNS = ("closer_is_smaller", "closer_is_larger")

MAX_HANDS = 2


def quantize_point(point: tuple[float, float]) -> str:
    """Fixture lookup key for segmentation queries (4-decimal)."""
    return f"{point[0]:.4f},{point[1]:.4f}"


@dataclass(frozen=True)
class Recordings:
    """Recorded provider responses for fixture replay."""

    detect: dict[str, dict[str, tuple[Detection, ...]]] = field(default_factory=dict)
    hands: dict[str, tuple[HandObservation, ...]] = field(default_factory=dict)
    depth: dict[str, DepthMap] = field(default_factory=dict)
    segment: dict[str, dict[str, PixelMask]] = field(default_factory=dict)
    extract: str | None = None
    transcribe: Transcript | None = None


@dataclass(frozen=True)
class PerceptionBundle:
    frames: tuple[FrameRef, ...]
    transcript: Transcript | None = None
    recordings: Recordings = field(default_factory=Recordings)
    z_sign: str = "closer_is_smaller"

    def frame_ids(self) -> set[str]:
        return {f.frame_id for f in self.frames}


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise DecodeError("invariant_violation", path, message)


def decode_bundle(data: bytes | str) -> PerceptionBundle:
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError("malformed_json", "$", f"malformed JSON: {exc.msg}") from exc
    return decode_bundle_jsonable(obj)


def decode_bundle_jsonable(obj) -> PerceptionBundle:
    if not isinstance(obj, dict):
        raise DecodeError("schema_mismatch", "$", "expected object")
    schema = obj.get("schema")
    if schema != SCHEMA_VERSION:
        raise DecodeError("schema_mismatch", "$.schema", f"expected {SCHEMA_VERSION!r}")

    z_sign = obj.get("z_sign", "closer_is_smaller")
    _check(z_sign in Z_SIGNS, "$.z_sign", f"z_sign must be one of {Z_SIGNS}")

    frames_raw = obj.get("frames")
    if not isinstance(frames_raw, list):
        raise DecodeError("schema_mismatch", "$.frames", "expected array")
    frames = tuple(
        decode_jsonable(f, FrameRef, f"$.frames[{i}]") for i, f in enumerate(frames_raw)
    )
    ids = [f.frame_id for f in frames]
    _check(len(set(ids)) == len(ids), "$.frames", "frame_ids must be unique")
    for a, b in zip(frames, frames[1:]):
        _check(
            b.timestamp > a.timestamp,
            "$.frames",
            "frame timestamps must be strictly increasing",
        )
    known = set(ids)

    transcript_raw = obj.get("transcript")
    transcript = (
        None
        if transcript_raw is None
        else decode_jsonable(transcript_raw, Transcript, "$.transcript")
    )

    rec_raw = obj.get("recordings", {})
    if not isinstance(rec_raw, dict):
        raise DecodeError("schema_mismatch", "$.recordings", "expected object")

    def check_frame(fid: str, path: str) -> None:
        _check(fid in known, path, f"recording references unknown frame {fid!r}")

    detect: dict[str, dict[str, tuple[Detection, ...]]] = {}
    for fid, prompts in rec_raw.get("detect", {}).items():
        check_frame(fid, f"$.recordings.detect.{fid}")
        per_prompt = {}
        for prompt, dets in prompts.items():
            path = f"$.recordings.detect.{fid}.{prompt!r}"
            if not isinstance(dets, list):
                raise DecodeError("schema_mismatch", path, "expected array")
            per_prompt[prompt] = tuple(
                decode_jsonable(d, Detection, f"{path}[{i}]")
                for i, d in enumerate(dets)
            )
        detect[fid] = per_prompt

    hands: dict[str, tuple[HandObservation, ...]] = {}
    for fid, hs in rec_raw.get("hands", {}).items():
        path = f"$.recordings.hands.{fid}"
        check_frame(fid, path)
        if not isinstance(hs, list):
            raise DecodeError("schema_mismatch", path, "expected array")
        _check(len(hs) <= MAX_HANDS, path, f"at most {MAX_HANDS} hands per frame")
        hands[fid] = tuple(
            decode_jsonable(h, HandObservation, f"{path}[{i}]")
            for i, h in enumerate(hs)
        )

    depth: dict[str, DepthMap] = {}
    for fid, d in rec_raw.get("depth", {}).items():
        path = f"$.recordings.depth.{fid}"
        check_frame(fid, path)
        depth[fid] = decode_jsonable(d, DepthMap, path)

    segment: dict[str, dict[str, PixelMask]] = {}
    for fid, points in rec_raw.get("segment", {}).items():
        check_frame(fid, f"$.recordings.segment.{fid}")
        segment[fid] = {
            key: decode_jsonable(m, PixelMask, f"$.recordings.segment.{fid}.{key!r}")
            for key, m in points.items()
        }

    extract = rec_raw.get("extract")
    if extract is not None:
        if isinstance(extract, dict):
            extract = extract.get("text")
        if not isinstance(extract, str):
            raise DecodeError(
                "schema_mismatch", "$.recordings.extract", "expected string or {text}"
            )

    transcribe_raw = rec_raw.get("transcribe")
    transcribe = (
        None
        if transcribe_raw is None
        else decode_jsonable(transcribe_raw, Transcript, "$.recordings.transcribe")
    )

    return PerceptionBundle(
        frames=frames,
        transcript=transcript,
        recordings=Recordings(
            detect=detect,
            hands=hands,
            depth=depth,
            segment=segment,
            extract=extract,
            transcribe=transcribe,
        ),
        z_sign=z_sign,
    )


def bundle_to_jsonable(bundle: PerceptionBundle) -> dict:
    rec = bundle.recordings
    recordings: dict = {}
    if rec.detect:
        recordings["detect"] = {
            fid: {prompt: [to_jsonable(d) for d in dets] for prompt, dets in prompts.items()}
            for fid, prompts in rec.detect.items()
        }
    if rec.hands:
        recordings["hands"] = {
            fid: [to_jsonable(h) for h in hs] for fid, hs in rec.hands.items()
        }
    if rec.depth:
        recordings["depth"] = {fid: to_jsonable(d) for fid, d in rec.depth.items()}
    if rec.segment:
        recordings["segment"] = {
            fid: {key: to_jsonable(m) for key, m in points.items()}
            for fid, points in rec.segment.items()
        }
    if rec.extract is not None:
        recordings["extract"] = {"text": rec.extract}
    if rec.transcribe is not None:
        recordings["transcribe"] = to_jsonable(rec.transcribe)

    out: dict = {
        "schema": SCHEMA_VERSION,
        "z_sign": bundle.z_sign,
        "frames": [to_jsonable(f) for f in bundle.frames],
        "recordings": recordings,
    }
    if bundle.transcript is not None:
        out["transcript"] = to_jsonable(bundle.transcript)
    return out


def encode_bundle(bundle: PerceptionBundle) -> bytes:
    return dumps_canonical(bundle_to_jsonable(bundle))


def validate_bundle_file(path: str) -> list[str]:
    """All schema/invariant violations in a bundle file, as readable lines."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        return [f"unreadable: {exc}"]
    try:
        decode_bundle(data)
    except DecodeError as exc:
        return [f"{exc.code}: {exc}"]
    return []
