from __future__ import annotations

import json
import math
import wave
from pathlib import Path

import cv2
import numpy as np
import pytest

FPS = 10.0
SIZE = (320, 240)

MUG_BBOX = (0.15, 0.55, 0.30, 0.72)
PLATE_BBOX = (0.55, 0.58, 0.80, 0.80)

SCRIPT = {
    "z_sign": "closer_is_smaller",
    "mask_size": [320, 240],
    "transcript": {
        "language": "en",
        "words": [
            {"text": "Take", "start": 0.10, "end": 0.28},
            {"text": "the", "start": 0.30, "end": 0.42},
            {"text": "mug", "start": 0.45, "end": 0.62},
            {"text": "and", "start": 0.65, "end": 0.78},
            {"text": "put", "start": 0.80, "end": 0.95},
            {"text": "it", "start": 0.97, "end": 1.05},
            {"text": "on", "start": 1.08, "end": 1.20},
            {"text": "the", "start": 1.22, "end": 1.32},
            {"text": "plate", "start": 1.35, "end": 1.55},
        ],
    },
    "extraction_reply": (
        "{'object': {'text': 'mug', 'timestamp': [0.45, 0.62]}, "
        "'action': {'text': 'put on', 'timestamp': [0.8, 1.2]}, "
        "'target': {'text': 'plate', 'timestamp': [1.35, 1.55]}}"
    ),
    "detections": {
        "mug.": [{"bbox": list(MUG_BBOX), "score": 0.92}],
        "plate.": [{"bbox": list(PLATE_BBOX), "score": 0.90}],
    },
    "hands": [
        {
            "from": 0.0,
            "to": 1.0,
            "tip": [0.35, 0.35],
            "at": [0.225, 0.635],
            "z": -0.3,
        },
        {
            "from": 1.0,
            "to": 3.0,
            "tip": [0.45, 0.30],
            "at": [0.675, 0.69],
            "z": -0.3,
        },
    ],
    "depth": {"kind": "constant", "value": 1.0},
}


def draw_frame(t: float) -> np.ndarray:
    frame = np.full((SIZE[1], SIZE[0], 3), 40, dtype=np.uint8)

    def rect(bbox, color):
        x0, y0, x1, y1 = bbox
        cv2.rectangle(
            frame,
            (int(x0 * SIZE[0]), int(y0 * SIZE[1])),
            (int(x1 * SIZE[0]), int(y1 * SIZE[1])),
            color,
            thickness=-1,
        )

    rect(MUG_BBOX, (40, 40, 200))
    rect(PLATE_BBOX, (60, 180, 60))
    for entry in SCRIPT["hands"]:
        if entry["from"] <= t <= entry["to"]:
            tip, at = entry["tip"], entry["at"]
            cv2.line(
                frame,
                (int(tip[0] * SIZE[0]), int(tip[1] * SIZE[1])),
                (int(at[0] * SIZE[0]), int(at[1] * SIZE[1])),
                (220, 220, 220),
                thickness=3,
            )
    return frame


def write_wav(path: Path, seconds: float = 2.2, rate: int = 16000) -> None:
    samples = bytearray()
    for n in range(int(seconds * rate)):
        value = int(12000 * math.sin(2 * math.pi * 220 * n / rate))
        samples += value.to_bytes(2, "little", signed=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(bytes(samples))


@pytest.fixture(scope="session")
def clip(tmp_path_factory) -> dict:
    """A synthetic command clip: mp4 + sidecar wav + scene script."""
    root = tmp_path_factory.mktemp("clip")
    video = root / "command.mp4"
    writer = cv2.VideoWriter(str(video), cv2.VideoWriter_fourcc(*"mp4v"), FPS, SIZE)
    assert writer.isOpened()
    count = int(2.2 * FPS)
    for k in range(count):
        writer.write(draw_frame(k / FPS))
    writer.release()

    write_wav(video.with_suffix(".wav"))

    script = root / "command.script.json"
    script.write_text(json.dumps(SCRIPT, indent=1))
    return {"video": video, "script": script, "root": root}


@pytest.fixture(scope="session")
def served_frames(clip, tmp_path_factory) -> Path:
    """Frames directory (PNGs + frames.json) extracted from the clip."""
    from uncom_bridge.record import extract_frames

    frames_dir = tmp_path_factory.mktemp("frames")
    extract_frames(clip["video"], frames_dir)
    return frames_dir
