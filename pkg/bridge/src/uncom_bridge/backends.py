"""Model backends behind the bridge protocol.

Backends speak plain JSON-able payloads matching the engine's wire
schemas; the bridge deliberately avoids importing engine types so the
protocol stays the only coupling. Two backends exist: a scripted
synthetic one for tests and offline development, and a live one that
wraps real models behind lazy imports.
"""

from __future__ import annotations

import json
import math
from pathlib import Path


class BackendError(Exception):
    """Raised by backends; surfaced in-protocol as code ModelError."""

    def __init__(self, message: str, code: str = "model_error"):
        super().__init__(message)
        self.code = code


MASK_SIZE = (320, 240)
DEPTH_SIZE = (64, 48)


def rect_mask_jsonable(bbox, size=MASK_SIZE) -> dict:
    """Filled-rectangle mask as row-major RLE, zero-run first."""
    width, height = size
    xmin = max(0, min(width, round(bbox[0] * width)))
    xmax = max(0, min(width, round(bbox[2] * width)))
    ymin = max(0, min(height, round(bbox[1] * height)))
    ymax = max(0, min(height, round(bbox[3] * height)))
    counts: list[int] = []
    current, run = 0, 0
    for y in range(height):
        for x in range(width):
            bit = 1 if (xmin <= x < xmax and ymin <= y < ymax) else 0
            if bit == current:
                run += 1
            else:
                counts.append(run)
                current, run = bit, 1
    counts.append(run)
    return {"width": width, "height": height, "rle": counts}


def _hand_jsonable(tip, at, z) -> dict:
    dx, dy = at[0] - tip[0], at[1] - tip[1]
    norm = math.hypot(dx, dy) or 1.0
    ux, uy = dx / norm, dy / norm
    base = (tip[0] - ux * 0.08, tip[1] - uy * 0.08)
    landmarks = []
    for i in range(21):
        if i == 8:
            x, y = tip
        elif i == 5:
            x, y = base
        else:
            x, y = base[0], base[1] + 0.02
        landmarks.append(
            {"x": min(1.0, max(0.0, x)), "y": min(1.0, max(0.0, y)), "z": z}
        )
    return {"landmarks": landmarks, "handedness": "right"}


class SyntheticBackend:
    """Scripted perception double driven by a scene description file.

    The script declares the transcript, per-prompt detections, pointing
    gestures over time ranges, and an optional extraction reply. This
    keeps record/replay plumbing testable with no model downloads;
    accuracy of real models is explicitly out of scope here.
    """

    def __init__(self, script_path: str | Path):
        self.script = json.loads(Path(script_path).read_text())
        self.z_sign = self.script.get("z_sign", "closer_is_smaller")
        self.mask_size = tuple(self.script.get("mask_size", MASK_SIZE))

    def capabilities(self) -> list[str]:
        caps = ["detect", "hands", "segment", "depth", "transcribe"]
        if self.script.get("extraction_reply"):
            caps.append("extract")
        return caps

    def transcribe(self, audio_path: str) -> dict:
        if not Path(audio_path).exists():
            raise BackendError(f"audio file not found: {audio_path}")
        transcript = self.script.get("transcript")
        if not transcript:
            raise BackendError("script has no transcript")
        return transcript

    def extract(self, prompts, transcript) -> str:
        reply = self.script.get("extraction_reply")
        if not reply:
            raise BackendError("script has no extraction reply")
        return reply

    def detect(self, frame_id: str, timestamp: float, image, prompt: str) -> list:
        boxes = self.script.get("detections", {}).get(prompt, [])
        label = prompt[:-1] if prompt.endswith(".") else prompt
        return [
            {
                "label": box.get("label", label),
                "bbox": list(box["bbox"]),
                "score": box.get("score", 0.9),
                "frame_id": frame_id,
            }
            for box in boxes
        ]

    def hands(self, frame_id: str, timestamp: float, image) -> list:
        out = []
        for entry in self.script.get("hands", []):
            if entry["from"] <= timestamp <= entry["to"]:
                out.append(
                    _hand_jsonable(entry["tip"], entry["at"], entry.get("z", -0.3))
                )
        return out[:2]

    def depth(self, frame_id: str, timestamp: float, image) -> dict:
        spec = self.script.get("depth", {"kind": "constant", "value": 1.0})
        width, height = DEPTH_SIZE
        if spec["kind"] == "constant":
            values = [float(spec.get("value", 1.0))] * (width * height)
        elif spec["kind"] == "ramp_y":
            lo, hi = spec.get("lo", 0.2), spec.get("hi", 1.0)
            values = [
                lo + (hi - lo) * (y / (height - 1))
                for y in range(height)
                for _ in range(width)
            ]
        else:
            raise BackendError(f"unknown depth kind {spec['kind']!r}")
        return {"width": width, "height": height, "values": values}

    def segment(self, frame_id: str, timestamp: float, image, point) -> dict:
        best = None
        best_d = math.inf
        for boxes in self.script.get("detections", {}).values():
            for box in boxes:
                b = box["bbox"]
                center = ((b[0] + b[2]) / 2, (b[1] + b[3]) / 2)
                d = math.hypot(center[0] - point[0], center[1] - point[1])
                if d < best_d:
                    best, best_d = b, d
        if best is None:
            raise BackendError("script has no boxes to segment")
        return rect_mask_jsonable(best, self.mask_size)


class LiveBackend:
    """Wraps published inference models; each import is lazy so the
    bridge starts without the heavyweight stack installed.

    Model choices are config-swappable; the defaults favour small
    variants that run on CPU.
    """

    DEFAULTS = {
        "asr_model": "large-v3",
        "llm_model": "microsoft/Phi-3-mini-4k-instruct",
        "detector_model": "IDEA-Research/grounding-dino-tiny",
        "segmenter_model": "facebook/sam-vit-base",
        "depth_model": "facebook/dpt-dinov2-small-kitti",
        "max_hands": 2,
    }

    z_sign = "closer_is_smaller"

    def __init__(self, config: dict | None = None):
        self.config = {**self.DEFAULTS, **(config or {})}
        self._models: dict[str, object] = {}

    def capabilities(self) -> list[str]:
        return ["transcribe", "extract", "detect", "hands", "depth", "segment"]

    def _require(self, module: str):
        try:
            return __import__(module, fromlist=["_"])
        except ImportError as exc:
            raise BackendError(
                f"capability needs {module!r}; install the [live] extra"
            ) from exc

    def _image(self, image_path):
        if not image_path:
            raise BackendError("live backend needs a frame image path")
        cv2 = self._require("cv2")
        image = cv2.imread(str(image_path))
        if image is None:
            raise BackendError(f"unreadable image: {image_path}")
        return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)

    def transcribe(self, audio_path: str) -> dict:
        fw = self._require("faster_whisper")
        model = self._models.setdefault(
            "asr", fw.WhisperModel(self.config["asr_model"])
        )
        segments, _ = model.transcribe(
            audio_path, language="en", word_timestamps=True
        )
        words = []
        for segment in segments:
            for word in segment.words or []:
                words.append(
                    {
                        "text": word.word.strip(),
                        "start": float(word.start),
                        "end": float(word.end),
                    }
                )
        return {"language": "en", "words": words}

    def extract(self, prompts, transcript) -> str:
        transformers = self._require("transformers")
        pipe = self._models.setdefault(
            "llm",
            transformers.pipeline("text-generation", model=self.config["llm_model"]),
        )
        messages = [
            {"role": "system", "content": prompts[0]},
            {"role": "user", "content": json.dumps(transcript)},
        ]
        first = pipe(messages, max_new_tokens=256)[0]["generated_text"][-1]["content"]
        messages += [
            {"role": "assistant", "content": first},
            {"role": "user", "content": prompts[1]},
        ]
        second = pipe(messages, max_new_tokens=256)[0]["generated_text"][-1]["content"]
        return second

    def detect(self, frame_id: str, timestamp: float, image_path, prompt: str) -> list:
        transformers = self._require("transformers")
        pipe = self._models.setdefault(
            "detector",
            transformers.pipeline(
                "zero-shot-object-detection", model=self.config["detector_model"]
            ),
        )
        pil = self._pil_image(image_path)
        results = pipe(pil, candidate_labels=[prompt])
        width, height = pil.size
        out = []
        for r in results:
            box = r["box"]
            out.append(
                {
                    "label": r["label"].rstrip("."),
                    "bbox": [
                        max(0.0, box["xmin"] / width),
                        max(0.0, box["ymin"] / height),
                        min(1.0, box["xmax"] / width),
                        min(1.0, box["ymax"] / height),
                    ],
                    "score": float(r["score"]),
                    "frame_id": frame_id,
                }
            )
        return out

    def _pil_image(self, image_path):
        pil = self._require("PIL.Image")
        return pil.open(str(image_path)).convert("RGB")

    def hands(self, frame_id: str, timestamp: float, image_path) -> list:
        mp = self._require("mediapipe")
        rgb = self._image(image_path)
        hands = self._models.setdefault(
            "hands",
            mp.solutions.hands.Hands(
                static_image_mode=True, max_num_hands=self.config["max_hands"]
            ),
        )
        result = hands.process(rgb)
        out = []
        for i, lms in enumerate(result.multi_hand_landmarks or []):
            handedness = "unknown"
            if result.multi_handedness and i < len(result.multi_handedness):
                handedness = result.multi_handedness[i].classification[0].label.lower()
            out.append(
                {
                    "landmarks": [
                        {"x": lm.x, "y": lm.y, "z": lm.z} for lm in lms.landmark
                    ],
                    "handedness": handedness if handedness in ("left", "right") else "unknown",
                }
            )
        return out[: self.config["max_hands"]]

    def depth(self, frame_id: str, timestamp: float, image_path) -> dict:
        transformers = self._require("transformers")
        np = self._require("numpy")
        pipe = self._models.setdefault(
            "depth",
            transformers.pipeline("depth-estimation", model=self.config["depth_model"]),
        )
        predicted = pipe(self._pil_image(image_path))["predicted_depth"]
        array = np.asarray(predicted).squeeze()
        # model convention is inverse depth; flip so larger means farther
        array = array.max() - array
        return {
            "width": int(array.shape[1]),
            "height": int(array.shape[0]),
            "values": [float(v) for v in array.ravel()],
        }

    def segment(self, frame_id: str, timestamp: float, image_path, point) -> dict:
        transformers = self._require("transformers")
        torch = self._require("torch")
        np = self._require("numpy")
        if "sam" not in self._models:
            self._models["sam"] = (
                transformers.SamModel.from_pretrained(self.config["segmenter_model"]),
                transformers.SamProcessor.from_pretrained(self.config["segmenter_model"]),
            )
        model, processor = self._models["sam"]
        pil = self._pil_image(image_path)
        width, height = pil.size
        inputs = processor(
            pil,
            input_points=[[[point[0] * width, point[1] * height]]],
            return_tensors="pt",
        )
        with torch.no_grad():
            outputs = model(**inputs)
        masks = processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )
        best = int(outputs.iou_scores.squeeze().argmax())
        grid = np.asarray(masks[0][0][best], dtype=bool)
        counts: list[int] = []
        current, run = 0, 0
        for bit in grid.ravel():
            bit = int(bit)
            if bit == current:
                run += 1
            else:
                counts.append(run)
                current, run = bit, 1
        counts.append(run)
        return {"width": int(grid.shape[1]), "height": int(grid.shape[0]), "rle": counts}


def make_backend(kind: str, script: str | None = None, config: dict | None = None):
    if kind == "synthetic":
        if not script:
            raise BackendError("synthetic backend needs --script")
        return SyntheticBackend(script)
    if kind == "live":
        return LiveBackend(config)
    raise BackendError(f"unknown backend {kind!r}")
