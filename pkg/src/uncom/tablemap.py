"""Voronoi table map: construction, occupancy, and empty-cell search.

The table bbox is partitioned by a Voronoi diagram over a uniform grid
of sites plus the detected object centers; each cell is found by
clipping the bbox with the half-plane against every other site, which
is exact and fast enough at the dozens-of-sites scale this runs at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoEmptyCellError
from .gesture import RAY, Ray3D, distance_point_to_ray3d
from .types import BBox, Detection, DepthMap, Point2, TableMap, VoronoiCell

DUPLICATE_SITE_TOL = 1e-9

# Clipping can leave zero-measure slivers with numerically positive
# area; anything this small is treated as no intersection.
MIN_INTERSECTION_AREA = 1e-12

DEFAULT_SITE_GRID = (6, 6)

CAMERA = "camera"
INSTRUCTOR = "instructor"


def _clip_halfplane(
    polygon: list[Point2], nx: float, ny: float, c: float
) -> list[Point2]:
    """Keep the part of a convex polygon with x*nx + y*ny <= c."""
    out: list[Point2] = []
    n = len(polygon)
    for i in range(n):
        cur = polygon[i]
        nxt = polygon[(i + 1) % n]
        cur_in = cur[0] * nx + cur[1] * ny <= c
        nxt_in = nxt[0] * nx + nxt[1] * ny <= c
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            dx = nxt[0] - cur[0]
            dy = nxt[1] - cur[1]
            denom = nx * dx + ny * dy
            t = (c - (cur[0] * nx + cur[1] * ny)) / denom
            out.append((cur[0] + t * dx, cur[1] + t * dy))
    return out


def _voronoi_cell_polygon(
    site: Point2, sites: list[Point2], bbox: BBox
) -> list[Point2]:
    xmin, ymin, xmax, ymax = bbox
    poly: list[Point2] = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    sx, sy = site
    for ox, oy in sites:
        if ox == sx and oy == sy:
            continue
        # closer-to-site half-plane: 2 p . (o - s) <= |o|^2 - |s|^2
        nx, ny = 2.0 * (ox - sx), 2.0 * (oy - sy)
        c = ox * ox + oy * oy - sx * sx - sy * sy
        poly = _clip_halfplane(poly, nx, ny, c)
        if len(poly) < 3:
            break
    return poly


def _polygon_area(poly: list[Point2] | tuple[Point2, ...]) -> float:
    area = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return area / 2.0


def _clip_to_bbox(poly: list[Point2], bbox: BBox) -> list[Point2]:
    xmin, ymin, xmax, ymax = bbox
    for nx, ny, c in (
        (-1.0, 0.0, -xmin),
        (1.0, 0.0, xmax),
        (0.0, -1.0, -ymin),
        (0.0, 1.0, ymax),
    ):
        poly = _clip_halfplane(poly, nx, ny, c)
        if len(poly) < 3:
            return []
    return poly


def grid_sites(bbox: BBox, rows: int, cols: int) -> list[Point2]:
    """Cell-center grid of rows x cols points strictly inside the bbox."""
    xmin, ymin, xmax, ymax = bbox
    w = xmax - xmin
    h = ymax - ymin
    return [
        (xmin + (c + 0.5) * w / cols, ymin + (r + 0.5) * h / rows)
        for r in range(rows)
        for c in range(cols)
    ]


def _inside_bbox(p: Point2, bbox: BBox) -> bool:
    return bbox[0] < p[0] < bbox[2] and bbox[1] < p[1] < bbox[3]


def build_table_map(
    table: Detection,
    objects: list[Detection] | tuple[Detection, ...],
    site_grid: tuple[int, int] = DEFAULT_SITE_GRID,
) -> TableMap:
    """Partition the table into Voronoi cells and mark object occupancy.

    Sites are a uniform rows x cols grid inside the table bbox plus the
    center of every object bbox (object centers falling outside the
    table are skipped as sites but still count for occupancy). A cell is
    occupied iff its polygon intersects any object bbox with positive
    area.
    """
    rows, cols = site_grid
    if rows < 2 or cols < 2:
        raise ValueError("site grid must be at least 2x2")
    bbox = table.bbox
    sites: list[Point2] = grid_sites(bbox, rows, cols)
    for obj in objects:
        center = obj.center
        if not _inside_bbox(center, bbox):
            continue
        if any(
            abs(center[0] - s[0]) <= DUPLICATE_SITE_TOL
            and abs(center[1] - s[1]) <= DUPLICATE_SITE_TOL
            for s in sites
        ):
            continue
        sites.append(center)

    cells: list[VoronoiCell] = []
    for site in sites:
        polygon = _voronoi_cell_polygon(site, sites, bbox)
        if len(polygon) < 3 or _polygon_area(polygon) <= 0:
            continue
        occupied = any(
            _intersection_area(polygon, obj.bbox) > MIN_INTERSECTION_AREA
            for obj in objects
        )
        cells.append(VoronoiCell(site=site, polygon=tuple(polygon), occupied=occupied))
    return TableMap(table_bbox=bbox, cells=tuple(cells))


def _intersection_area(polygon: list[Point2] | tuple[Point2, ...], bbox: BBox) -> float:
    clipped = _clip_to_bbox(list(polygon), bbox)
    if len(clipped) < 3:
        return 0.0
    return max(0.0, _polygon_area(clipped))


_DIRECTION_PREDICATES = {
    "left": lambda cell, anchor, mirror: (
        cell[0] > anchor[0] if mirror else cell[0] < anchor[0]
    ),
    "right": lambda cell, anchor, mirror: (
        cell[0] < anchor[0] if mirror else cell[0] > anchor[0]
    ),
    "front": lambda cell, anchor, mirror: cell[1] > anchor[1],
    "behind": lambda cell, anchor, mirror: cell[1] < anchor[1],
    "beside": lambda cell, anchor, mirror: True,
    "near": lambda cell, anchor, mirror: True,
    "next_to": lambda cell, anchor, mirror: True,
}


def find_empty_cell_directional(
    table_map: TableMap,
    anchor: Detection,
    relation_kind: str,
    convention: str = CAMERA,
) -> VoronoiCell:
    """Nearest empty cell in the direction named by the spatial term.

    Directions use the image frame by default: left means smaller x,
    front means larger y (toward the camera). The instructor convention
    mirrors left/right.
    """
    predicate = _DIRECTION_PREDICATES.get(relation_kind)
    if predicate is None:
        raise ValueError(f"unsupported relation kind {relation_kind!r}")
    mirror = convention == INSTRUCTOR
    anchor_center = anchor.center
    best: VoronoiCell | None = None
    best_dist = math.inf
    for cell in table_map.cells:
        if cell.occupied:
            continue
        if not predicate(cell.site, anchor_center, mirror):
            continue
        dist = math.hypot(
            cell.site[0] - anchor_center[0], cell.site[1] - anchor_center[1]
        )
        if dist < best_dist:
            best, best_dist = cell, dist
    if best is None:
        raise NoEmptyCellError(
            f"no empty cell {relation_kind} of the anchor", relation=relation_kind
        )
    return best


def annotate_depth(table_map: TableMap, depth: DepthMap) -> TableMap:
    """Attach the depth value under each cell site."""
    annotated = []
    for cell in table_map.cells:
        px = min(depth.width - 1, max(0, int(cell.site[0] * depth.width)))
        py = min(depth.height - 1, max(0, int(cell.site[1] * depth.height)))
        annotated.append(
            VoronoiCell(
                site=cell.site,
                polygon=cell.polygon,
                occupied=cell.occupied,
                center_depth=depth.at_pixel(px, py),
            )
        )
    return TableMap(
        table_bbox=table_map.table_bbox,
        cells=tuple(annotated),
        table_mask=table_map.table_mask,
    )


@dataclass(frozen=True)
class CellChoice:
    cell: VoronoiCell
    occupied_fallback: bool


def select_cell_by_ray3d(
    table_map: TableMap, ray: Ray3D, semantics: str = RAY
) -> CellChoice:
    """Empty cell whose 3D center is nearest the lifted pointing ray.

    Falls back to the global minimizer (flagged) when every cell is
    occupied.
    """
    if not table_map.cells:
        raise NoEmptyCellError("table map has no cells")

    def cell_distance(cell: VoronoiCell) -> float:
        if cell.center_depth is None:
            raise ValueError("cells must be depth-annotated before 3D selection")
        center = (cell.site[0], cell.site[1], cell.center_depth)
        return distance_point_to_ray3d(ray, center, semantics)

    candidates = table_map.empty_cells()
    fallback = not candidates
    if fallback:
        candidates = list(table_map.cells)
    best = min(candidates, key=lambda c: (cell_distance(c), table_map.cells.index(c)))
    return CellChoice(cell=best, occupied_fallback=fallback)
