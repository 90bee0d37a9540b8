"""Perception provider contract, fixture replay, and the bridge client.

A provider answers perception queries for frames referenced by id. The
fixture provider replays a recorded bundle byte-for-byte; the bridge
client forwards the same queries to a spawned process speaking
newline-delimited JSON on stdio. Both sit behind one contract, so the
engine never knows which it is talking to.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from typing import Protocol, runtime_checkable

from .bundle import PerceptionBundle, quantize_point
from .codec import decode_jsonable, to_jsonable
from .errors import (
    BridgeProtocolError,
    BridgeUnavailableError,
    MissingRecordingError,
    UncomError,
    UnknownFrameError,
)
from .types import (
    SCHEMA_VERSION,
    Detection,
    DepthMap,
    HandObservation,
    PixelMask,
    Transcript,
)

CAPABILITIES = ("transcribe", "extract", "detect", "hands", "depth", "segment")
REQUIRED_CAPABILITIES = frozenset({"detect", "hands", "segment"})

SERIAL = "serial"
CONCURRENT = "concurrent"

BRIDGE_CMD_ENV = "UNCOM_BRIDGE_CMD"


@runtime_checkable
class PerceptionProvider(Protocol):
    concurrency: str

    def capabilities(self) -> frozenset[str]: ...

    def z_sign(self) -> str: ...

    def detect(self, frame_id: str, prompt: str) -> list[Detection]: ...

    def hands(self, frame_id: str) -> list[HandObservation]: ...

    def segment(self, frame_id: str, point: tuple[float, float]) -> PixelMask: ...

    def depth(self, frame_id: str) -> DepthMap: ...

    def transcribe(self, audio_ref: str) -> Transcript: ...

    def extract(self, prompts: list[str], transcript: Transcript) -> str: ...


class FixtureProvider:
    """Pure replay of a recorded bundle; immutable and concurrent-safe."""

    concurrency = CONCURRENT

    def __init__(self, bundle: PerceptionBundle):
        self._bundle = bundle
        self._frames = bundle.frame_ids()

    def capabilities(self) -> frozenset[str]:
        caps = set(REQUIRED_CAPABILITIES)
        rec = self._bundle.recordings
        if rec.depth:
            caps.add("depth")
        if rec.extract is not None:
            caps.add("extract")
        if rec.transcribe is not None:
            caps.add("transcribe")
        return frozenset(caps)

    def z_sign(self) -> str:
        return self._bundle.z_sign

    def _check_frame(self, frame_id: str) -> None:
        if frame_id not in self._frames:
            raise UnknownFrameError(f"unknown frame {frame_id!r}", frame_id=frame_id)

    def detect(self, frame_id: str, prompt: str) -> list[Detection]:
        self._check_frame(frame_id)
        per_frame = self._bundle.recordings.detect.get(frame_id, {})
        if prompt not in per_frame:
            raise MissingRecordingError(
                f"no detect recording for frame {frame_id!r} prompt {prompt!r}; "
                f"available prompts: {sorted(per_frame)}",
                capability="detect",
                frame_id=frame_id,
                prompt=prompt,
                available=sorted(per_frame),
            )
        return list(per_frame[prompt])

    def hands(self, frame_id: str) -> list[HandObservation]:
        self._check_frame(frame_id)
        per_frame = self._bundle.recordings.hands
        if frame_id not in per_frame:
            raise MissingRecordingError(
                f"no hands recording for frame {frame_id!r}",
                capability="hands",
                frame_id=frame_id,
            )
        return list(per_frame[frame_id])

    def segment(self, frame_id: str, point: tuple[float, float]) -> PixelMask:
        if not (0.0 <= point[0] <= 1.0 and 0.0 <= point[1] <= 1.0):
            raise ValueError("segment point must lie in [0,1]^2")
        self._check_frame(frame_id)
        key = quantize_point(point)
        per_frame = self._bundle.recordings.segment.get(frame_id, {})
        if key not in per_frame:
            raise MissingRecordingError(
                f"no segment recording for frame {frame_id!r} point {key}; "
                f"available points: {sorted(per_frame)}",
                capability="segment",
                frame_id=frame_id,
                point=key,
                available=sorted(per_frame),
            )
        return per_frame[key]

    def depth(self, frame_id: str) -> DepthMap:
        self._check_frame(frame_id)
        per_frame = self._bundle.recordings.depth
        if frame_id not in per_frame:
            raise MissingRecordingError(
                f"no depth recording for frame {frame_id!r}",
                capability="depth",
                frame_id=frame_id,
            )
        return per_frame[frame_id]

    def transcribe(self, audio_ref: str) -> Transcript:
        rec = self._bundle.recordings.transcribe
        if rec is None:
            raise MissingRecordingError(
                "no transcribe recording", capability="transcribe"
            )
        return rec

    def extract(self, prompts: list[str], transcript: Transcript) -> str:
        rec = self._bundle.recordings.extract
        if rec is None:
            raise MissingRecordingError("no extract recording", capability="extract")
        return rec


_ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (
        UnknownFrameError,
        MissingRecordingError,
        BridgeUnavailableError,
        BridgeProtocolError,
    )
}


class BridgeClient:
    """Provider backed by a spawned bridge process (NDJSON over stdio).

    The bridge pushes a handshake line on startup declaring its
    capabilities and z-sign convention; afterwards each request line is
    answered by exactly one reply line carrying the same id.
    """

    concurrency = SERIAL

    def __init__(self, command: str | None = None, timeout: float = 60.0):
        cmd = command or os.environ.get(BRIDGE_CMD_ENV)
        if not cmd:
            raise BridgeUnavailableError(
                f"no bridge command configured (set {BRIDGE_CMD_ENV})"
            )
        self._timeout = timeout
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                shlex.split(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeUnavailableError(f"failed to spawn bridge: {exc}") from exc
        handshake = self._read_line()
        self._handshake = self._parse_line(handshake)
        if self._handshake.get("schema") != SCHEMA_VERSION:
            raise BridgeProtocolError(
                f"handshake schema mismatch: {handshake.strip()[:120]}"
            )

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def capabilities(self) -> frozenset[str]:
        return frozenset(self._handshake.get("capabilities", []))

    def z_sign(self) -> str:
        return self._handshake.get("z_sign", "closer_is_smaller")

    def _read_line(self) -> str:
        start = time.monotonic()
        stdout = self._proc.stdout
        assert stdout is not None
        while True:
            remaining = self._timeout - (time.monotonic() - start)
            if remaining <= 0:
                raise BridgeUnavailableError(
                    f"bridge timed out after {self._timeout:.1f}s",
                    elapsed=round(time.monotonic() - start, 3),
                )
            ready, _, _ = select.select([stdout], [], [], remaining)
            if not ready:
                continue
            line = stdout.readline()
            if line == "":
                raise BridgeUnavailableError(
                    "bridge closed its output",
                    elapsed=round(time.monotonic() - start, 3),
                )
            if line.strip():
                return line

    @staticmethod
    def _parse_line(line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(
                f"bridge sent a non-JSON line: {line.strip()[:120]!r}"
            ) from exc
        if not isinstance(obj, dict):
            raise BridgeProtocolError(
                f"bridge sent a non-object line: {line.strip()[:120]!r}"
            )
        return obj

    def _call(self, capability: str, args: dict) -> object:
        self._next_id += 1
        request = {"id": self._next_id, "capability": capability, "args": args}
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(json.dumps(request) + "\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeUnavailableError(f"bridge pipe broken: {exc}") from exc
        reply = self._parse_line(self._read_line())
        if reply.get("id") != self._next_id:
            raise BridgeProtocolError(
                f"reply id {reply.get('id')!r} does not match request {self._next_id}"
            )
        if not reply.get("ok"):
            error = reply.get("error") or {}
            code = error.get("code", "bridge_error")
            message = error.get("message", "bridge reported an error")
            cls = _ERRORS_BY_CODE.get(code)
            if cls is not None:
                raise cls(message)
            exc = UncomError(message)
            exc.code = code
            raise exc
        return reply.get("payload")

    def detect(self, frame_id: str, prompt: str) -> list[Detection]:
        payload = self._call("detect", {"frame": frame_id, "prompt": prompt})
        if not isinstance(payload, list):
            raise BridgeProtocolError("detect payload must be an array")
        return [
            decode_jsonable(d, Detection, f"$.payload[{i}]")
            for i, d in enumerate(payload)
        ]

    def hands(self, frame_id: str) -> list[HandObservation]:
        payload = self._call("hands", {"frame": frame_id})
        if not isinstance(payload, list):
            raise BridgeProtocolError("hands payload must be an array")
        return [
            decode_jsonable(h, HandObservation, f"$.payload[{i}]")
            for i, h in enumerate(payload)
        ]

    def segment(self, frame_id: str, point: tuple[float, float]) -> PixelMask:
        payload = self._call(
            "segment", {"frame": frame_id, "point": [point[0], point[1]]}
        )
        return decode_jsonable(payload, PixelMask, "$.payload")

    def depth(self, frame_id: str) -> DepthMap:
        payload = self._call("depth", {"frame": frame_id})
        return decode_jsonable(payload, DepthMap, "$.payload")

    def transcribe(self, audio_ref: str) -> Transcript:
        payload = self._call("transcribe", {"audio": audio_ref})
        return decode_jsonable(payload, Transcript, "$.payload")

    def extract(self, prompts: list[str], transcript: Transcript) -> str:
        payload = self._call(
            "extract",
            {
                "schema": SCHEMA_VERSION,
                "prompts": list(prompts),
                "transcript": to_jsonable(transcript),
            },
        )
        if isinstance(payload, dict) and "text" in payload:
            payload = payload["text"]
        if not isinstance(payload, str):
            raise BridgeProtocolError("extract payload must be a string or {text}")
        return payload
