"""Record mode: turn one command video into a replayable perception bundle.

The engine itself enumerates the queries: record spawns the grounding
CLI in live-bridge mode against this process's backend, logs every
request/reply that crosses the wire, and folds the log into bundle
recordings. The result replays through the fixture provider with no
bridge installed.
"""

from __future__ import annotations

import json
import os
import shlex
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import cv2


class RecordError(Exception):
    def __init__(self, message: str, code: str = "record_failed"):
        super().__init__(message)
        self.code = code


def extract_frames(video_path: Path, frames_dir: Path) -> list[dict]:
    """Demux RGB frames to PNGs plus a frames.json index."""
    capture = cv2.VideoCapture(str(video_path))
    if not capture.isOpened():
        raise RecordError(f"cannot open video: {video_path}")
    fps = capture.get(cv2.CAP_PROP_FPS) or 30.0
    frames_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    index = {}
    k = 0
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        frame_id = f"f{k:05d}"
        name = f"{frame_id}.png"
        cv2.imwrite(str(frames_dir / name), frame)
        timestamp = k / fps
        frames.append({"frame_id": frame_id, "timestamp": timestamp, "image": name})
        index[frame_id] = {"timestamp": timestamp, "image": name}
        k += 1
    capture.release()
    if not frames:
        raise RecordError(f"video has no frames: {video_path}")
    (frames_dir / "frames.json").write_text(json.dumps(index, indent=1))
    return frames


def locate_audio(video_path: Path, workdir: Path) -> Path:
    """Demux the audio track with ffmpeg, or accept a sidecar wav.

    Without ffmpeg on PATH a pre-demuxed `<stem>.wav` next to the video
    stands in for the embedded track; a video with neither is rejected.
    """
    ffmpeg = shutil.which("ffmpeg")
    if ffmpeg:
        out = workdir / "audio.wav"
        proc = subprocess.run(
            [ffmpeg, "-y", "-i", str(video_path), "-vn", "-acodec", "pcm_s16le", str(out)],
            capture_output=True,
            text=True,
        )
        if proc.returncode == 0 and out.exists() and out.stat().st_size > 0:
            return out
        sidecar = video_path.with_suffix(".wav")
        if sidecar.exists():
            return sidecar
        raise RecordError(
            f"video has no audio track: {video_path}", code="no_audio_track"
        )
    sidecar = video_path.with_suffix(".wav")
    if sidecar.exists():
        return sidecar
    raise RecordError(
        f"no ffmpeg on PATH and no sidecar wav next to {video_path}",
        code="no_audio_track",
    )


def _fold_log(log_path: Path, bundle: dict) -> None:
    recordings: dict = bundle.setdefault("recordings", {})
    if not log_path.exists():
        return
    for line in log_path.read_text().splitlines():
        entry = json.loads(line)
        if entry["type"] == "handshake":
            bundle["z_sign"] = entry["payload"].get("z_sign", "closer_is_smaller")
            continue
        capability = entry["capability"]
        args = entry["args"]
        payload = entry["payload"]
        if capability == "detect":
            recordings.setdefault("detect", {}).setdefault(args["frame"], {})[
                args["prompt"]
            ] = payload
        elif capability == "hands":
            recordings.setdefault("hands", {})[args["frame"]] = payload
        elif capability == "depth":
            recordings.setdefault("depth", {})[args["frame"]] = payload
        elif capability == "segment":
            x, y = args["point"]
            key = f"{x:.4f},{y:.4f}"
            recordings.setdefault("segment", {}).setdefault(args["frame"], {})[key] = payload
        elif capability == "transcribe":
            recordings["transcribe"] = payload
        elif capability == "extract":
            recordings["extract"] = {"text": payload}


def record(
    video_path: str | Path,
    out_path: str | Path,
    backend_kind: str = "synthetic",
    script: str | Path | None = None,
    uncom_cmd: str = "uncom",
) -> Path:
    """Convert a command video into a self-contained bundle on disk."""
    video_path = Path(video_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frames_dir = out_path.parent / f"{out_path.stem}.frames"
    frames = extract_frames(video_path, frames_dir)
    audio = locate_audio(video_path, frames_dir)

    skeleton = {
        "schema": "uncom/1",
        "z_sign": "closer_is_smaller",
        "frames": [
            {"frame_id": f["frame_id"], "timestamp": f["timestamp"]} for f in frames
        ],
        "recordings": {},
    }

    with tempfile.TemporaryDirectory(prefix="uncom-record-") as tmp:
        tmpdir = Path(tmp)
        skeleton_path = tmpdir / "skeleton.bundle.json"
        skeleton_path.write_text(json.dumps(skeleton))
        log_path = tmpdir / "wire.jsonl"

        serve_cmd = [
            sys.executable, "-m", "uncom_bridge", "serve",
            "--backend", backend_kind,
            "--frames", str(frames_dir),
            "--audio", str(audio),
            "--record-log", str(log_path),
        ]
        if script:
            serve_cmd += ["--script", str(script)]

        env = dict(os.environ)
        env["UNCOM_BRIDGE_CMD"] = " ".join(shlex.quote(part) for part in serve_cmd)
        ground = subprocess.run(
            shlex.split(uncom_cmd)
            + [
                "ground",
                "--bundle", str(skeleton_path),
                "--provider", "bridge",
                "--out", str(tmpdir / "out"),
                "--no-render",
            ],
            capture_output=True,
            text=True,
            env=env,
        )
        if ground.returncode != 0:
            error_path = tmpdir / "out" / "error.json"
            detail = error_path.read_text() if error_path.exists() else ground.stderr
            raise RecordError(
                f"grounding over the live bridge failed (exit {ground.returncode}): {detail.strip()}"
            )

        bundle = dict(skeleton)
        bundle["frames"] = [dict(f) for f in frames]
        _fold_log(log_path, bundle)

    out_path.write_text(json.dumps(bundle, sort_keys=True, separators=(",", ":")) + "\n")

    validate = subprocess.run(
        shlex.split(uncom_cmd) + ["validate", "--bundle", str(out_path)],
        capture_output=True,
        text=True,
    )
    if validate.returncode != 0:
        raise RecordError(
            f"recorded bundle failed validation: {validate.stderr.strip() or validate.stdout.strip()}"
        )
    return out_path
