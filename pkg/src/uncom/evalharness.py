"""Evaluation harness: grade grounding runs against gold commands.

A dataset directory holds triples of files per scenario:

    NAME.bundle.json   recorded perception bundle
    NAME.gold.json     expected GroundedCommand
    NAME.labels.json   variation-axis labels for the scenario

An object matches on name plus bbox IoU >= 0.5; a target matches on
kind plus IoU >= 0.5 (object targets) or the chosen cell center falling
inside the gold cell polygon (empty-cell targets). Accuracy aggregates
per variation-axis value, and the per-axis sums are cross-checked
against the overall counts on every run.
"""

from __future__ import annotations

import json
from pathlib import Path

from .bundle import decode_bundle
from .codec import decode_json
from .errors import DecodeError, UncomError
from .pipeline import PipelineConfig, ground
from .providers import FixtureProvider
from .types import BBox, EmptyCellTarget, GroundedCommand, ObjectTarget, Point2

IOU_THRESHOLD = 0.5

VARIATION_AXES = {
    "object": ("Reference", "Deixis"),
    "object_distractors": ("Yes", "No"),
    "target": ("Reference", "Deixis", "Absolute Area", "Relative Area"),
    "target_distractors": ("Yes", "No"),
    "clutter": ("Yes", "No"),
}


def bbox_iou(a: BBox, b: BBox) -> float:
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def point_in_convex_polygon(point: Point2, polygon) -> bool:
    n = len(polygon)
    sign = 0
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        cross = (x2 - x1) * (point[1] - y1) - (y2 - y1) * (point[0] - x1)
        if abs(cross) < 1e-12:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _target_summary(target) -> dict:
    if isinstance(target, ObjectTarget):
        return {
            "kind": "object",
            "name": target.object.name,
            "bbox": list(target.object.bbox),
        }
    return {
        "kind": "empty_cell",
        "cell_center": list(target.cell_center),
        "cell_polygon": [list(p) for p in target.cell_polygon],
    }


def match_command(actual: GroundedCommand, gold: GroundedCommand) -> dict:
    """Per-bundle grading; returns match booleans plus a diff summary."""
    object_match = (
        actual.object.name == gold.object.name
        and bbox_iou(actual.object.bbox, gold.object.bbox) >= IOU_THRESHOLD
    )
    if isinstance(gold.target, ObjectTarget):
        target_match = (
            isinstance(actual.target, ObjectTarget)
            and bbox_iou(actual.target.object.bbox, gold.target.object.bbox)
            >= IOU_THRESHOLD
        )
    else:
        target_match = isinstance(
            actual.target, EmptyCellTarget
        ) and point_in_convex_polygon(
            actual.target.cell_center, gold.target.cell_polygon
        )
    passed = object_match and target_match
    result = {
        "passed": passed,
        "object_match": object_match,
        "target_match": target_match,
    }
    if not passed:
        result["diff"] = {
            "expected": {
                "object": {"name": gold.object.name, "bbox": list(gold.object.bbox)},
                "target": _target_summary(gold.target),
            },
            "actual": {
                "object": {
                    "name": actual.object.name,
                    "bbox": list(actual.object.bbox),
                },
                "target": _target_summary(actual.target),
            },
        }
    return result


def _load_labels(path: Path) -> dict[str, str]:
    labels = json.loads(path.read_text())
    out = {}
    for axis, allowed in VARIATION_AXES.items():
        value = labels.get(axis)
        if value not in allowed:
            raise DecodeError(
                "schema_mismatch", f"$.{axis}", f"label must be one of {allowed}"
            )
        out[axis] = value
    return out


def evaluate_dataset(
    dataset_dir: str | Path, config: PipelineConfig | None = None
) -> dict:
    """Ground every bundle in the dataset and grade it against gold."""
    config = config or PipelineConfig()
    dataset = Path(dataset_dir)
    bundles = sorted(dataset.glob("*.bundle.json"))

    results: list[dict] = []
    skipped: list[dict] = []
    for bundle_path in bundles:
        name = bundle_path.name[: -len(".bundle.json")]
        gold_path = dataset / f"{name}.gold.json"
        labels_path = dataset / f"{name}.labels.json"
        if not gold_path.exists():
            skipped.append({"name": name, "reason": "missing gold file"})
            continue
        if not labels_path.exists():
            skipped.append({"name": name, "reason": "missing labels file"})
            continue
        try:
            labels = _load_labels(labels_path)
            bundle = decode_bundle(bundle_path.read_bytes())
            gold = decode_json(gold_path.read_bytes(), GroundedCommand)
        except DecodeError as exc:
            skipped.append({"name": name, "reason": f"{exc.code}: {exc}"})
            continue

        entry: dict = {"name": name, "labels": labels}
        try:
            outcome = ground(bundle, FixtureProvider(bundle), config)
        except UncomError as exc:
            entry.update(
                {
                    "passed": False,
                    "object_match": False,
                    "target_match": False,
                    "error": exc.to_jsonable(),
                }
            )
        else:
            entry.update(match_command(outcome.command, gold))
            entry["flags"] = list(outcome.flags)
        results.append(entry)

    overall = {
        "passed": sum(1 for r in results if r["passed"]),
        "total": len(results),
        "errors": sum(1 for r in results if "error" in r),
    }
    by_axis: dict[str, dict[str, dict[str, int]]] = {}
    for axis, values in VARIATION_AXES.items():
        by_axis[axis] = {
            v: {"passed": 0, "total": 0} for v in values
        }
    for r in results:
        for axis in VARIATION_AXES:
            cell = by_axis[axis][r["labels"][axis]]
            cell["total"] += 1
            cell["passed"] += 1 if r["passed"] else 0

    for axis, values in by_axis.items():
        total = sum(v["total"] for v in values.values())
        passed = sum(v["passed"] for v in values.values())
        if total != overall["total"] or passed != overall["passed"]:
            raise AssertionError(
                f"axis {axis!r} aggregation does not sum to the overall counts"
            )

    return {
        "schema": "uncom/1",
        "overall": overall,
        "by_axis": by_axis,
        "bundles": results,
        "skipped": skipped,
    }


def report_table(report: dict) -> str:
    """Aligned text table of per-axis accuracy."""
    rows: list[tuple[str, str, int, int]] = []
    for axis, values in report["by_axis"].items():
        for value, stats in values.items():
            rows.append((axis, value, stats["passed"], stats["total"]))
    overall = report["overall"]
    rows.append(("overall", "-", overall["passed"], overall["total"]))

    header = ("axis", "value", "passed", "total", "accuracy")
    width_axis = max(len(header[0]), max(len(r[0]) for r in rows))
    width_value = max(len(header[1]), max(len(r[1]) for r in rows))
    lines = [
        f"{header[0]:<{width_axis}}  {header[1]:<{width_value}}  "
        f"{header[2]:>6}  {header[3]:>5}  {header[4]:>8}"
    ]
    for axis, value, passed, total in rows:
        acc = f"{passed / total:.3f}" if total else "-"
        lines.append(
            f"{axis:<{width_axis}}  {value:<{width_value}}  "
            f"{passed:>6}  {total:>5}  {acc:>8}"
        )
    if report["skipped"]:
        lines.append("")
        for item in report["skipped"]:
            lines.append(f"skipped {item['name']}: {item['reason']}")
    return "\n".join(lines) + "\n"


def report_csv(report: dict) -> str:
    """Delimited per-axis accuracy rows."""
    lines = ["axis,value,passed,total,accuracy"]
    for axis, values in report["by_axis"].items():
        for value, stats in values.items():
            acc = stats["passed"] / stats["total"] if stats["total"] else 0.0
            lines.append(f"{axis},{value},{stats['passed']},{stats['total']},{acc:.4f}")
    overall = report["overall"]
    total_acc = overall["passed"] / overall["total"] if overall["total"] else 0.0
    lines.append(f"overall,-,{overall['passed']},{overall['total']},{total_acc:.4f}")
    return "\n".join(lines) + "\n"
