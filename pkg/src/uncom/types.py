"""Core domain types.

All values are immutable after construction and validate their own
invariants in ``__post_init__``. Coordinates are normalized to [0,1]
relative to frame width/height; depth values are unitless relative
estimates where larger means farther from the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvariantError

SCHEMA_VERSION = "uncom/1"

Point2 = tuple[float, float]
Point3 = tuple[float, float, float]
BBox = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


def bbox_center(bbox: BBox) -> Point2:
    return ((bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)


def _check_bbox(bbox: BBox) -> None:
    xmin, ymin, xmax, ymax = bbox
    if not (xmin < xmax):
        raise InvariantError("xmin < xmax violated")
    if not (ymin < ymax):
        raise InvariantError("ymin < ymax violated")
    for v in bbox:
        if not (0.0 <= v <= 1.0):
            raise InvariantError("bbox coordinate outside [0,1]")


@dataclass(frozen=True)
class WordToken:
    """Single transcript word with its spoken time span in seconds."""

    text: str
    start: float
    end: float

    def __post_init__(self):
        if not self.text.strip():
            raise InvariantError("word text is empty")
        if self.start < 0:
            raise InvariantError("word start is negative")
        if self.end < self.start:
            raise InvariantError("end >= start violated")


@dataclass(frozen=True)
class Transcript:
    """Ordered word tokens; the temporal backbone of the pipeline."""

    words: tuple[WordToken, ...]
    language: str = "en"

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for a, b in zip(self.words, self.words[1:]):
            if b.start < a.start:
                raise InvariantError("words not sorted by start time")

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    @property
    def extent(self) -> tuple[float, float]:
        if not self.words:
            return (0.0, 0.0)
        return (self.words[0].start, max(w.end for w in self.words))


@dataclass(frozen=True)
class Mention:
    """Surface form of an extracted command element with its time span.

    ``concrete`` is None for action mentions (the flag is meaningless
    there); for object/target mentions it distinguishes named references
    ("mug") from deixis ("here", "this thing").
    """

    text: str
    timespan: tuple[float, float]
    concrete: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "timespan", tuple(self.timespan))
        if not self.text.strip():
            raise InvariantError("mention text is empty")
        if self.timespan[1] < self.timespan[0]:
            raise InvariantError("timespan end >= start violated")


@dataclass(frozen=True)
class CommandElements:
    """Extracted (object, action, target) mentions; each optional."""

    object: Mention | None = None
    action: Mention | None = None
    target: Mention | None = None

    def __post_init__(self):
        if self.object is None and self.action is None and self.target is None:
            raise InvariantError("at least one mention required")

    def ordering_violated(self) -> bool:
        """Object named after the target; flagged, never rejected."""
        if self.object is None or self.target is None:
            return False
        return self.object.timespan[0] > self.target.timespan[0]


@dataclass(frozen=True)
class Landmark:
    """Hand landmark in normalized image coordinates.

    x and y are clamped into [0,1] at construction; z is a relative-depth
    scalar whose sign convention is declared per bundle (``z_sign``).
    """

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", min(1.0, max(0.0, self.x)))
        object.__setattr__(self, "y", min(1.0, max(0.0, self.y)))


INDEX_FINGER_BASE = 5
INDEX_FINGER_TIP = 8
LANDMARK_COUNT = 21


@dataclass(frozen=True)
class HandObservation:
    """One detected hand: exactly 21 landmarks indexed 0..20."""

    landmarks: tuple[Landmark, ...]
    handedness: str = "unknown"
    confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        if len(self.landmarks) != LANDMARK_COUNT:
            raise InvariantError(
                f"exactly {LANDMARK_COUNT} landmarks required, got {len(self.landmarks)}"
            )
        if self.handedness not in ("left", "right", "unknown"):
            raise InvariantError("handedness must be left|right|unknown")

    @property
    def finger_base(self) -> Landmark:
        return self.landmarks[INDEX_FINGER_BASE]

    @property
    def finger_tip(self) -> Landmark:
        return self.landmarks[INDEX_FINGER_TIP]


@dataclass(frozen=True)
class Detection:
    """Open-vocabulary detection: the label is the prompt that produced it."""

    label: str
    bbox: BBox
    score: float
    frame_id: str

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(self.bbox))
        _check_bbox(self.bbox)
        if not (0.0 <= self.score <= 1.0):
            raise InvariantError("score outside [0,1]")

    @property
    def center(self) -> Point2:
        return bbox_center(self.bbox)


@dataclass(frozen=True)
class PixelMask:
    """Binary mask as row-major run-length counts, zero-run first.

    Counts alternate zero-run/one-run; every count after the first is
    positive and the counts sum to width*height.
    """

    width: int
    height: int
    rle: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "rle", tuple(self.rle))
        if self.width < 0 or self.height < 0:
            raise InvariantError("mask dimensions must be non-negative")
        if any(c < 0 for c in self.rle):
            raise InvariantError("rle counts must be non-negative")
        if any(c == 0 for c in self.rle[1:]):
            raise InvariantError("rle counts after the first must be positive")
        if sum(self.rle) != self.width * self.height:
            raise InvariantError("sum of runs == width*height violated")


@dataclass(frozen=True)
class DepthMap:
    """Row-major relative depth, larger = farther; all values finite."""

    width: int
    height: int
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) != self.width * self.height:
            raise InvariantError("values.length == width*height violated")
        if any(not math.isfinite(v) for v in self.values):
            raise InvariantError("depth values must be finite")

    def at_pixel(self, px: int, py: int) -> float:
        return self.values[py * self.width + px]

    def minmax_normalized(self) -> "DepthMap":
        """Rescale values into [0,1]; a constant map normalizes to zeros."""
        lo, hi = min(self.values), max(self.values)
        if hi - lo <= 0.0:
            vals = tuple(0.0 for _ in self.values)
        else:
            span = hi - lo
            vals = tuple((v - lo) / span for v in self.values)
        return DepthMap(self.width, self.height, vals)


@dataclass(frozen=True)
class ObjectGrounding:
    """A named object pinned to a frame: bbox plus exact pixel mask."""

    name: str
    bbox: BBox
    mask: PixelMask
    frame_id: str

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(self.bbox))
        _check_bbox(self.bbox)
        if not self.name:
            raise InvariantError("object name is empty")
        if not self.frame_id:
            raise InvariantError("frame_id is empty")


def _polygon_signed_area(vertices: tuple[Point2, ...]) -> float:
    area = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return area / 2.0


def _check_convex(vertices: tuple[Point2, ...]) -> None:
    n = len(vertices)
    if n < 3:
        raise InvariantError("polygon needs at least 3 vertices")
    sign = 0
    for i in range(n):
        ox, oy = vertices[i]
        ax, ay = vertices[(i + 1) % n]
        bx, by = vertices[(i + 2) % n]
        cross = (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)
        if abs(cross) < 1e-15:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            raise InvariantError("cell polygon is not convex")


@dataclass(frozen=True)
class ObjectTarget:
    """Target resolved to a concrete object."""

    object: ObjectGrounding

    kind = "object"


@dataclass(frozen=True)
class EmptyCellTarget:
    """Target resolved to an empty table cell."""

    cell_polygon: tuple[Point2, ...]
    cell_center: Point2
    frame_id: str

    kind = "empty_cell"

    def __post_init__(self):
        object.__setattr__(
            self, "cell_polygon", tuple(tuple(p) for p in self.cell_polygon)
        )
        object.__setattr__(self, "cell_center", tuple(self.cell_center))
        _check_convex(self.cell_polygon)
        if not self.frame_id:
            raise InvariantError("frame_id is empty")


TargetResult = ObjectTarget | EmptyCellTarget


@dataclass(frozen=True)
class GroundedCommand:
    """Final pipeline output: grounded object, action text, resolved target."""

    object: ObjectGrounding
    action: str
    target: TargetResult


@dataclass(frozen=True)
class VoronoiCell:
    """One cell of the table partition.

    The ``site`` doubles as the cell center for distance queries and
    depth annotation; polygon vertices are counter-clockwise with
    respect to the (x, y) axes.
    """

    site: Point2
    polygon: tuple[Point2, ...]
    occupied: bool
    center_depth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(self.site))
        object.__setattr__(self, "polygon", tuple(tuple(p) for p in self.polygon))
        if _polygon_signed_area(self.polygon) <= 0:
            raise InvariantError("cell polygon area must be positive and CCW")

    @property
    def area(self) -> float:
        return _polygon_signed_area(self.polygon)


@dataclass(frozen=True)
class TableMap:
    """Occupancy-annotated Voronoi partition of the table region."""

    table_bbox: BBox
    cells: tuple[VoronoiCell, ...]
    table_mask: PixelMask | None = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "table_bbox", tuple(self.table_bbox))
        _check_bbox(self.table_bbox)

    def empty_cells(self) -> list[VoronoiCell]:
        return [c for c in self.cells if not c.occupied]


@dataclass(frozen=True)
class FrameRef:
    """Timestamped frame handle; the image itself stays with providers."""

    frame_id: str
    timestamp: float
    image: str | None = None

    def __post_init__(self):
        if not self.frame_id:
            raise InvariantError("frame_id is empty")
