"""NDJSON stdio server: one request line in, one reply line out.

The handshake is pushed once on startup; every later line is a request
{id, capability, args} answered by {id, ok, payload|error}. Errors stay
in-protocol: a backend exception becomes ok:false with a code, never a
process death.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .backends import BackendError

SCHEMA = "uncom/1"


def load_frames_index(frames_dir: str | Path | None) -> dict:
    """frame_id -> {timestamp, image} from a frames directory."""
    if not frames_dir:
        return {}
    index_path = Path(frames_dir) / "frames.json"
    if not index_path.exists():
        return {}
    raw = json.loads(index_path.read_text())
    out = {}
    for frame_id, meta in raw.items():
        image = meta.get("image")
        out[frame_id] = {
            "timestamp": float(meta["timestamp"]),
            "image": str(Path(frames_dir) / image) if image else None,
        }
    return out


class BridgeServer:
    def __init__(self, backend, frames_index=None, audio_path=None, record_log=None):
        self.backend = backend
        self.frames = frames_index or {}
        self.audio_path = audio_path
        self.record_log = record_log

    def _frame(self, args: dict) -> tuple[str, float, str | None]:
        frame_id = args.get("frame")
        if frame_id not in self.frames:
            raise BackendError(f"unknown frame {frame_id!r}", code="unknown_frame")
        meta = self.frames[frame_id]
        return frame_id, meta["timestamp"], meta.get("image")

    def handle(self, capability: str, args: dict):
        if capability == "detect":
            frame_id, t, image = self._frame(args)
            return self.backend.detect(frame_id, t, image, args.get("prompt", ""))
        if capability == "hands":
            frame_id, t, image = self._frame(args)
            return self.backend.hands(frame_id, t, image)
        if capability == "depth":
            frame_id, t, image = self._frame(args)
            return self.backend.depth(frame_id, t, image)
        if capability == "segment":
            frame_id, t, image = self._frame(args)
            point = args.get("point")
            if (
                not isinstance(point, (list, tuple))
                or len(point) != 2
                or not all(isinstance(v, (int, float)) for v in point)
            ):
                raise BackendError("segment needs point [x, y]", code="bad_request")
            return self.backend.segment(frame_id, t, image, tuple(point))
        if capability == "transcribe":
            audio = self.audio_path or args.get("audio")
            return self.backend.transcribe(audio)
        if capability == "extract":
            return self.backend.extract(
                args.get("prompts", []), args.get("transcript")
            )
        raise BackendError(f"unknown capability {capability!r}", code="unknown_capability")

    def _log(self, entry: dict) -> None:
        if self.record_log is None:
            return
        with open(self.record_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout

        def send(obj: dict) -> None:
            stdout.write(json.dumps(obj) + "\n")
            stdout.flush()

        handshake = {
            "schema": SCHEMA,
            "capabilities": sorted(self.backend.capabilities()),
            "z_sign": getattr(self.backend, "z_sign", "closer_is_smaller"),
        }
        send(handshake)
        self._log({"type": "handshake", "payload": handshake})

        for line in stdin:
            if not line.strip():
                continue
            rid = None
            try:
                request = json.loads(line)
                if not isinstance(request, dict):
                    raise BackendError("request must be an object", code="bad_request")
                rid = request.get("id")
                capability = request.get("capability")
                args = request.get("args") or {}
                payload = self.handle(capability, args)
            except BackendError as exc:
                send({"id": rid, "ok": False, "error": {"code": exc.code, "message": str(exc)}})
                continue
            except json.JSONDecodeError as exc:
                send({"id": rid, "ok": False, "error": {"code": "bad_request", "message": str(exc)}})
                continue
            except Exception as exc:  # noqa: BLE001 - surfaced in-protocol
                send({"id": rid, "ok": False, "error": {"code": "model_error", "message": str(exc)}})
                continue
            send({"id": rid, "ok": True, "payload": payload})
            self._log({
                "type": "call",
                "capability": capability,
                "args": args,
                "payload": payload,
            })
