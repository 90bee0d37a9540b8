"""Grounding pipeline: from perception bundle to grounded command.

The flow mirrors the decision tree the engine is built around: extract
command elements, pick the frame where each relevant word ends, find
the pointing hand in that frame, resolve the object by prompt plus ray
disambiguation, then route the target through one of four branches:

  (a) concrete target, no relation   -> detected object
  (b) concrete target with relation  -> empty cell beside the anchor
  (c) deictic target, container hit  -> detected container
  (d) deictic target, bare table     -> empty cell under the 3D ray

Every decision lands in the trace, including every rejected candidate
and its distance to the pointing ray.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

from .bundle import PerceptionBundle
from .errors import (
    AdapterUnavailableError,
    BetweenUnsupportedError,
    DegeneratePointingError,
    MissingMentionError,
    NoFramesError,
    NoGestureError,
    NoHandDetectedError,
    ObjectNotFoundError,
    PipelineError,
    TableNotFoundError,
    TargetNotFoundError,
    UncomError,
)
from .extraction import (
    DETERMINERS,
    ExtractionResult,
    SpatialRelation,
    extract_fallback,
    extract_via_adapter,
)
from .gesture import (
    PointingRay,
    distance_point_to_ray,
    lift_ray_3d,
    pointing_ray,
    select_nearest_detection,
    select_pointing_hand,
)
from .tablemap import annotate_depth, build_table_map, find_empty_cell_directional, select_cell_by_ray3d
from .types import (
    CommandElements,
    Detection,
    EmptyCellTarget,
    FrameRef,
    GroundedCommand,
    Mention,
    ObjectGrounding,
    ObjectTarget,
    TargetResult,
    bbox_center,
)

RAY_SEMANTICS = ("ray", "line")
DIRECTION_CONVENTIONS = ("camera", "instructor")
EXTRACTORS = ("auto", "adapter", "fallback")


@dataclass(frozen=True)
class PipelineConfig:
    site_grid: tuple[int, int] = (6, 6)
    ray_semantics: str = "ray"
    direction_convention: str = "camera"
    score_floor: float = 0.3
    generic_object_prompt: str = "objects"
    container_prompt: str = "container"
    table_prompt: str = "table"
    extractor: str = "auto"
    aspect: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "site_grid", tuple(self.site_grid))
        if not (0.0 <= self.score_floor <= 1.0):
            raise ValueError("score_floor must lie in [0,1]")
        if self.ray_semantics not in RAY_SEMANTICS:
            raise ValueError(f"ray_semantics must be one of {RAY_SEMANTICS}")
        if self.direction_convention not in DIRECTION_CONVENTIONS:
            raise ValueError(
                f"direction_convention must be one of {DIRECTION_CONVENTIONS}"
            )
        if self.extractor not in EXTRACTORS:
            raise ValueError(f"extractor must be one of {EXTRACTORS}")
        for name in ("generic_object_prompt", "container_prompt", "table_prompt"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")

    def to_jsonable(self) -> dict:
        return {
            "site_grid": list(self.site_grid),
            "ray_semantics": self.ray_semantics,
            "direction_convention": self.direction_convention,
            "score_floor": self.score_floor,
            "generic_object_prompt": self.generic_object_prompt,
            "container_prompt": self.container_prompt,
            "table_prompt": self.table_prompt,
            "extractor": self.extractor,
            "aspect": self.aspect,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def with_overrides(self, overrides: Sequence[str]) -> "PipelineConfig":
        """Apply CLI --set key=value pairs; values parse as JSON when possible."""
        updates = {}
        for item in overrides:
            key, _, raw = item.partition("=")
            if not _ or key not in self.__dataclass_fields__:
                raise ValueError(f"bad override {item!r}")
            try:
                updates[key] = json.loads(raw)
            except json.JSONDecodeError:
                updates[key] = raw
        return replace(self, **updates)


@dataclass(frozen=True)
class TraceStep:
    step: str
    summary: str
    decision: str
    alternatives: tuple[str, ...] = ()

    def to_jsonable(self) -> dict:
        return {
            "step": self.step,
            "summary": self.summary,
            "decision": self.decision,
            "alternatives": list(self.alternatives),
        }


@dataclass(frozen=True)
class GroundOutcome:
    command: GroundedCommand
    trace: tuple[TraceStep, ...]
    flags: tuple[str, ...]
    pointing: dict[str, dict | None] = field(default_factory=dict)
    candidates: dict[str, list[dict]] = field(default_factory=dict)


def detection_prompt(text: str) -> str:
    """Detector prompt for a mention: determiners go, a period follows."""
    words = text.lower().split()
    while words and words[0] in DETERMINERS:
        words.pop(0)
    phrase = " ".join(words) if words else text.lower().strip()
    return f"{phrase}."


def select_frame(
    frames: Sequence[FrameRef], mention: Mention
) -> tuple[FrameRef, bool]:
    """First frame at or after the moment the relevant word ends.

    Returns (frame, late_word); late_word marks the clamp to the last
    frame when the word ends after the video does.
    """
    if not frames:
        raise NoFramesError("frame index is empty")
    end = mention.timespan[1]
    for frame in frames:
        if frame.timestamp >= end:
            return frame, False
    return frames[-1], True


def _describe(det: Detection, dist: float | None) -> str:
    box = ",".join(f"{v:.4f}" for v in det.bbox)
    tail = "no ray" if dist is None else f"ray_dist={dist:.6f}"
    return f"{det.label} bbox=[{box}] score={det.score:.3f} {tail}"


def _pick_detection(
    detections: list[Detection],
    ray: PointingRay | None,
    config: PipelineConfig,
) -> tuple[Detection, list[str]]:
    """Ray-nearest pick with score fallback; returns (choice, candidate log)."""
    if ray is not None:
        chosen = select_nearest_detection(
            ray, detections, config.ray_semantics, config.aspect
        )
        log = [
            _describe(d, distance_point_to_ray(ray, d.center, config.ray_semantics, config.aspect))
            for d in detections
        ]
    else:
        chosen = max(enumerate(detections), key=lambda kv: (kv[1].score, -kv[0]))[1]
        log = [_describe(d, None) for d in detections]
    return chosen, log


def _detect_filtered(
    provider, frame_id: str, prompt: str, config: PipelineConfig
) -> list[Detection]:
    detections = provider.detect(frame_id, prompt)
    return [d for d in detections if d.score >= config.score_floor]


@dataclass
class _Tracer:
    steps: list[TraceStep] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    pointing: dict[str, dict | None] = field(default_factory=dict)
    candidates: dict[str, list[dict]] = field(default_factory=dict)

    def add(self, step: str, summary: str, decision: str, alternatives=()) -> None:
        self.steps.append(TraceStep(step, summary, decision, tuple(alternatives)))

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def record_candidates(self, group: str, detections: list[Detection]) -> None:
        self.candidates[group] = [
            {"label": d.label, "bbox": list(d.bbox), "score": d.score}
            for d in detections
        ]


@dataclass(frozen=True)
class ResolvedObject:
    name: str
    detection: Detection


def resolve_object(
    elements: CommandElements,
    frame_id: str,
    ray: PointingRay | None,
    provider,
    config: PipelineConfig,
    tracer: _Tracer | None = None,
) -> ResolvedObject:
    """Ground the object mention to one detection in its frame."""
    tracer = tracer if tracer is not None else _Tracer()
    mention = elements.object
    if mention is None:
        raise MissingMentionError("command has no object mention")
    concrete = mention.concrete if mention.concrete is not None else True
    prompt = detection_prompt(
        mention.text if concrete else config.generic_object_prompt
    )
    detections = _detect_filtered(provider, frame_id, prompt, config)
    if not detections:
        raise ObjectNotFoundError(
            f"nothing detected for object prompt {prompt!r} in {frame_id}",
            prompt=prompt,
            frame_id=frame_id,
        )
    if ray is None:
        tracer.flag("no_gesture")
    tracer.record_candidates("object", detections)
    chosen, log = _pick_detection(detections, ray, config)
    name = mention.text if concrete else chosen.label
    tracer.add(
        "object_resolution",
        f"prompt={prompt!r} frame={frame_id} candidates={len(detections)}",
        f"chose {_describe(chosen, None if ray is None else distance_point_to_ray(ray, chosen.center, config.ray_semantics, config.aspect))} name={name!r}",
        log,
    )
    return ResolvedObject(name=name, detection=chosen)


def _detect_table(provider, frame_id: str, config: PipelineConfig) -> Detection:
    prompt = detection_prompt(config.table_prompt)
    tables = _detect_filtered(provider, frame_id, prompt, config)
    if not tables:
        raise TableNotFoundError(
            f"no table detected with prompt {prompt!r} in {frame_id}",
            frame_id=frame_id,
        )
    return max(enumerate(tables), key=lambda kv: (kv[1].score, -kv[0]))[1]


def resolve_target(
    elements: CommandElements,
    relation: SpatialRelation | None,
    frame_id: str,
    ray: PointingRay | None,
    provider,
    config: PipelineConfig,
    tracer: _Tracer | None = None,
) -> TargetResult:
    """Route the target mention through the four-way branch."""
    tracer = tracer if tracer is not None else _Tracer()
    mention = elements.target
    if mention is None:
        raise MissingMentionError("command has no target mention")
    concrete = mention.concrete if mention.concrete is not None else True

    if concrete and relation is None:
        return _target_branch_object(
            "a", mention.text, frame_id, ray, provider, config, tracer
        )
    if concrete and relation is not None:
        return _target_branch_relative(relation, frame_id, ray, provider, config, tracer)

    # deictic target: try the container prompt first
    prompt = detection_prompt(config.container_prompt)
    containers = _detect_filtered(provider, frame_id, prompt, config)
    if containers:
        if ray is None:
            tracer.flag("no_gesture")
        tracer.record_candidates("target", containers)
        chosen, log = _pick_detection(containers, ray, config)
        tracer.add(
            "target_resolution",
            f"branch=c prompt={prompt!r} frame={frame_id} candidates={len(containers)}",
            f"chose {_describe(chosen, None)} name={chosen.label!r}",
            log,
        )
        return ObjectTarget(
            ObjectGrounding(
                name=chosen.label,
                bbox=chosen.bbox,
                mask=provider.segment(frame_id, chosen.center),
                frame_id=frame_id,
            )
        )
    return _target_branch_absolute(frame_id, ray, provider, config, tracer)


def _target_branch_object(
    branch: str,
    text: str,
    frame_id: str,
    ray: PointingRay | None,
    provider,
    config: PipelineConfig,
    tracer: _Tracer,
) -> TargetResult:
    prompt = detection_prompt(text)
    detections = _detect_filtered(provider, frame_id, prompt, config)
    if not detections:
        raise TargetNotFoundError(
            f"nothing detected for target prompt {prompt!r} in {frame_id}",
            prompt=prompt,
            frame_id=frame_id,
        )
    if ray is None:
        tracer.flag("no_gesture")
    tracer.record_candidates("target", detections)
    chosen, log = _pick_detection(detections, ray, config)
    tracer.add(
        "target_resolution",
        f"branch={branch} prompt={prompt!r} frame={frame_id} candidates={len(detections)}",
        f"chose {_describe(chosen, None)} name={text!r}",
        log,
    )
    return ObjectTarget(
        ObjectGrounding(
            name=text,
            bbox=chosen.bbox,
            mask=provider.segment(frame_id, chosen.center),
            frame_id=frame_id,
        )
    )


def _target_branch_relative(
    relation: SpatialRelation,
    frame_id: str,
    ray: PointingRay | None,
    provider,
    config: PipelineConfig,
    tracer: _Tracer,
) -> TargetResult:
    if relation.kind == "between":
        raise BetweenUnsupportedError(
            "between needs two anchors; not supported", anchor=relation.anchor_text
        )
    if relation.incomplete or not relation.anchor_text:
        raise TargetNotFoundError("relation has no anchor noun phrase")

    anchor_prompt = detection_prompt(relation.anchor_text)
    anchors = _detect_filtered(provider, frame_id, anchor_prompt, config)
    if not anchors:
        raise TargetNotFoundError(
            f"no anchor detected for prompt {anchor_prompt!r} in {frame_id}",
            prompt=anchor_prompt,
            frame_id=frame_id,
        )
    if ray is None:
        tracer.flag("no_gesture")
    tracer.record_candidates("target", anchors)
    anchor, anchor_log = _pick_detection(anchors, ray, config)

    table = _detect_table(provider, frame_id, config)
    objects = _detect_filtered(
        provider, frame_id, detection_prompt(config.generic_object_prompt), config
    )
    all_objects = list(objects)
    if anchor not in all_objects:
        all_objects.append(anchor)
    table_map = build_table_map(table, all_objects, config.site_grid)
    cell = find_empty_cell_directional(
        table_map, anchor, relation.kind, config.direction_convention
    )
    tracer.add(
        "target_resolution",
        f"branch=b relation={relation.kind} anchor_prompt={anchor_prompt!r} "
        f"frame={frame_id} cells={len(table_map.cells)} "
        f"empty={len(table_map.empty_cells())}",
        f"chose empty cell at ({cell.site[0]:.4f},{cell.site[1]:.4f}) "
        f"{relation.kind} of anchor {_describe(anchor, None)}",
        anchor_log,
    )
    return EmptyCellTarget(
        cell_polygon=cell.polygon, cell_center=cell.site, frame_id=frame_id
    )


def _target_branch_absolute(
    frame_id: str,
    ray: PointingRay | None,
    provider,
    config: PipelineConfig,
    tracer: _Tracer,
) -> TargetResult:
    if ray is None:
        raise NoGestureError(
            "deictic area target needs a pointing gesture, none detected"
        )
    table = _detect_table(provider, frame_id, config)
    objects = _detect_filtered(
        provider, frame_id, detection_prompt(config.generic_object_prompt), config
    )
    table_map = build_table_map(table, objects, config.site_grid)
    depth = provider.depth(frame_id).minmax_normalized()
    table_map = annotate_depth(table_map, depth)
    ray3d = lift_ray_3d(ray, depth)
    choice = select_cell_by_ray3d(table_map, ray3d, config.ray_semantics)
    if choice.occupied_fallback:
        tracer.flag("occupied_fallback")
    cell = choice.cell
    tracer.add(
        "target_resolution",
        f"branch=d frame={frame_id} cells={len(table_map.cells)} "
        f"empty={len(table_map.empty_cells())}",
        f"chose cell at ({cell.site[0]:.4f},{cell.site[1]:.4f}) under the 3D ray"
        + (" (occupied fallback)" if choice.occupied_fallback else ""),
    )
    return EmptyCellTarget(
        cell_polygon=cell.polygon, cell_center=cell.site, frame_id=frame_id
    )


def _frame_ray(
    bundle: PerceptionBundle,
    provider,
    frame_id: str,
    label: str,
    tracer: _Tracer,
) -> PointingRay | None:
    hands = provider.hands(frame_id)
    if not hands:
        tracer.add(f"hand_choice:{label}", f"frame={frame_id} hands=0", "no hand")
        tracer.flag("no_gesture")
        tracer.pointing[label] = None
        return None
    # the provider declares the landmark z convention (bridge handshake /
    # bundle header); fall back to the bundle for bare providers
    z_sign = provider.z_sign() if hasattr(provider, "z_sign") else bundle.z_sign
    try:
        hand = select_pointing_hand(hands, z_sign)
        ray = pointing_ray(hand)
    except (NoHandDetectedError, DegeneratePointingError) as exc:
        tracer.add(
            f"hand_choice:{label}",
            f"frame={frame_id} hands={len(hands)}",
            f"unusable gesture: {exc.message}",
        )
        tracer.flag("no_gesture")
        tracer.pointing[label] = None
        return None
    tracer.pointing[label] = {
        "base": [ray.base[0], ray.base[1]],
        "tip": [ray.origin[0], ray.origin[1]],
    }
    tracer.add(
        f"hand_choice:{label}",
        f"frame={frame_id} hands={len(hands)}",
        f"fingertip=({ray.origin[0]:.4f},{ray.origin[1]:.4f}) "
        f"direction=({ray.direction[0]:.4f},{ray.direction[1]:.4f})",
        tuple(
            f"hand[{i}] handedness={h.handedness} tip_z={h.finger_tip.z:.4f}"
            for i, h in enumerate(hands)
        ),
    )
    return ray


def _extract(bundle: PerceptionBundle, provider, config, tracer) -> ExtractionResult:
    transcript = bundle.transcript
    if transcript is None and "transcribe" in provider.capabilities():
        transcript = provider.transcribe("bundle-audio")
    if transcript is None or not transcript.words:
        raise PipelineError("extraction", MissingMentionError("bundle has no transcript"))

    use_adapter = config.extractor == "adapter" or (
        config.extractor == "auto" and "extract" in provider.capabilities()
    )
    if use_adapter:
        try:
            return extract_via_adapter(transcript, provider)
        except AdapterUnavailableError:
            tracer.flag("adapter_unavailable")
    return extract_fallback(transcript)


def ground(
    bundle: PerceptionBundle,
    provider,
    config: PipelineConfig | None = None,
) -> GroundOutcome:
    """Run the full decision flow over one bundle; never emits partials."""
    config = config or PipelineConfig()
    tracer = _Tracer()

    def step(name: str, fn, *args):
        try:
            return fn(*args)
        except PipelineError:
            raise
        except UncomError as exc:
            raise PipelineError(name, exc) from exc

    result = step("extraction", _extract, bundle, provider, config, tracer)
    elements = result.elements
    for flag in result.flags:
        tracer.flag(flag)
    tracer.add(
        "extraction",
        f"transcript={bundle.transcript.text!r}" if bundle.transcript else "transcript from provider",
        f"source={result.source} object={_mention_str(elements.object)} "
        f"action={_mention_str(elements.action)} target={_mention_str(elements.target)} "
        f"relation={result.relation.kind if result.relation else None}",
    )

    if elements.object is None:
        raise PipelineError(
            "object_resolution", MissingMentionError("command has no object mention")
        )
    if elements.target is None:
        raise PipelineError(
            "target_resolution", MissingMentionError("command has no target mention")
        )

    obj_frame, obj_late = step(
        "frame_selection", select_frame, bundle.frames, elements.object
    )
    tgt_frame, tgt_late = step(
        "frame_selection", select_frame, bundle.frames, elements.target
    )
    if obj_late or tgt_late:
        tracer.flag("late_word")
    tracer.add(
        "frame_selection",
        f"object_word_end={elements.object.timespan[1]:.3f} "
        f"target_word_end={elements.target.timespan[1]:.3f}",
        f"object_frame={obj_frame.frame_id} target_frame={tgt_frame.frame_id}"
        + (" (late word)" if obj_late or tgt_late else ""),
    )

    obj_ray = step("hand_analysis", _frame_ray, bundle, provider, obj_frame.frame_id, "object", tracer)
    tgt_ray = (
        obj_ray
        if tgt_frame.frame_id == obj_frame.frame_id
        else step("hand_analysis", _frame_ray, bundle, provider, tgt_frame.frame_id, "target", tracer)
    )

    resolved = step(
        "object_resolution",
        resolve_object,
        elements,
        obj_frame.frame_id,
        obj_ray,
        provider,
        config,
        tracer,
    )
    target = step(
        "target_resolution",
        resolve_target,
        elements,
        result.relation,
        tgt_frame.frame_id,
        tgt_ray,
        provider,
        config,
        tracer,
    )

    center = bbox_center(resolved.detection.bbox)
    mask = step("segmentation", provider.segment, obj_frame.frame_id, center)
    tracer.add(
        "segmentation",
        f"frame={obj_frame.frame_id} point=({center[0]:.4f},{center[1]:.4f})",
        f"object mask {mask.width}x{mask.height}",
    )

    command = GroundedCommand(
        object=ObjectGrounding(
            name=resolved.name,
            bbox=resolved.detection.bbox,
            mask=mask,
            frame_id=obj_frame.frame_id,
        ),
        action=elements.action.text if elements.action else "",
        target=target,
    )
    tracer.add(
        "compile",
        "assembled grounded command",
        f"object={command.object.name!r} action={command.action!r} "
        f"target_kind={command.target.kind}",
    )
    return GroundOutcome(
        command=command,
        trace=tuple(tracer.steps),
        flags=tuple(tracer.flags),
        pointing=dict(tracer.pointing),
        candidates=dict(tracer.candidates),
    )


def _mention_str(m: Mention | None) -> str:
    if m is None:
        return "none"
    flag = "" if m.concrete is None else f"/{'concrete' if m.concrete else 'deictic'}"
    return f"{m.text!r}{flag}"


def trace_to_jsonable(trace: tuple[TraceStep, ...], flags: tuple[str, ...]) -> dict:
    return {
        "schema": "uncom/1",
        "flags": list(flags),
        "steps": [s.to_jsonable() for s in trace],
    }
