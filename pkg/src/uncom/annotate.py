"""Overlay rendering: boxes, pointing arrow, and target cell on a frame.

The annotation JSON written by the CLI is enough to recreate the
overlay externally; this module also renders it directly to a PNG with
matplotlib so a grounding run leaves a reviewable picture next to the
machine-readable outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Polygon as MplPolygon
from matplotlib.patches import Rectangle

from .pipeline import GroundOutcome
from .types import EmptyCellTarget, GroundedCommand, ObjectTarget

OBJECT_COLOR = "#ff8800"
TARGET_COLOR = "#2ca02c"
CELL_COLOR = "#1f77b4"
CANDIDATE_COLOR = "#bbbbbb"


def annotation_jsonable(outcome: GroundOutcome) -> dict:
    """Everything needed to redraw the overlay, in one document."""
    command = outcome.command
    pointing = outcome.pointing
    candidates = outcome.candidates
    target: dict
    if isinstance(command.target, ObjectTarget):
        target = {
            "kind": "object",
            "name": command.target.object.name,
            "bbox": list(command.target.object.bbox),
            "frame_id": command.target.object.frame_id,
        }
    else:
        target = {
            "kind": "empty_cell",
            "cell_polygon": [list(p) for p in command.target.cell_polygon],
            "cell_center": list(command.target.cell_center),
            "frame_id": command.target.frame_id,
        }
    return {
        "schema": "uncom/1",
        "title": f"{command.object.name} - {command.action} - {_target_name(command)}",
        "object": {
            "name": command.object.name,
            "bbox": list(command.object.bbox),
            "frame_id": command.object.frame_id,
        },
        "target": target,
        "pointing": pointing,
        "candidates": candidates,
        "flags": list(outcome.flags),
    }


def _target_name(command: GroundedCommand) -> str:
    if isinstance(command.target, ObjectTarget):
        return command.target.object.name
    return "empty cell"


def _draw_bbox(ax, bbox, color, lw=2.0, label=None):
    x0, y0, x1, y1 = bbox
    ax.add_patch(
        Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, edgecolor=color, linewidth=lw)
    )
    if label:
        ax.text(
            x0,
            max(0.0, y0 - 0.015),
            label,
            color=color,
            fontsize=9,
            ha="left",
            va="bottom",
        )


def render_annotation(annotation: dict, out_path: str) -> None:
    """Draw the overlay in normalized image coordinates (y grows down)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(1.0, 0.0)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])

    for group in annotation.get("candidates", {}).values():
        for cand in group:
            _draw_bbox(ax, cand["bbox"], CANDIDATE_COLOR, lw=1.0)

    obj = annotation["object"]
    _draw_bbox(ax, obj["bbox"], OBJECT_COLOR, lw=2.5, label=obj["name"])

    target = annotation["target"]
    if target["kind"] == "object":
        _draw_bbox(ax, target["bbox"], TARGET_COLOR, lw=2.5, label=target["name"])
    else:
        ax.add_patch(
            MplPolygon(
                target["cell_polygon"],
                closed=True,
                fill=True,
                facecolor=CELL_COLOR,
                alpha=0.25,
                edgecolor=CELL_COLOR,
                linewidth=2.0,
            )
        )
        cx, cy = target["cell_center"]
        ax.plot([cx], [cy], marker="x", color=CELL_COLOR, markersize=8)

    for ray in annotation.get("pointing", {}).values():
        if not ray:
            continue
        (bx, by), (tx, ty) = ray["base"], ray["tip"]
        ax.annotate(
            "",
            xy=(tx + (tx - bx) * 2.0, ty + (ty - by) * 2.0),
            xytext=(bx, by),
            arrowprops={"arrowstyle": "->", "color": TARGET_COLOR, "lw": 2.0},
        )

    ax.set_title(annotation.get("title", ""), fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_eval_report(report: dict, out_path: str) -> None:
    """Accuracy-per-axis-value bar chart for an evaluation report."""
    rows = []
    for axis, values in sorted(report.get("by_axis", {}).items()):
        for value, stats in sorted(values.items()):
            rows.append((f"{axis}={value}", stats["passed"], stats["total"]))
    if not rows:
        rows = [("no bundles", 0, 0)]
    labels = [r[0] for r in rows]
    accuracy = [r[1] / r[2] if r[2] else 0.0 for r in rows]

    fig, ax = plt.subplots(figsize=(8.0, max(2.0, 0.35 * len(rows) + 1.2)))
    ypos = range(len(rows))
    ax.barh(ypos, accuracy, color=CELL_COLOR)
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.05)
    ax.set_xlabel("accuracy")
    overall = report.get("overall", {})
    ax.set_title(
        f"grounding accuracy ({overall.get('passed', 0)}/{overall.get('total', 0)} bundles)",
        fontsize=10,
    )
    for y, acc in zip(ypos, accuracy):
        ax.text(min(acc + 0.02, 1.0), y, f"{acc:.2f}", va="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
