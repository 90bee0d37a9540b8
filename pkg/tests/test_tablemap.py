"""Voronoi table map against nearest-site, tiling and rasterization oracles."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.geometry import box as shapely_box

from uncom.errors import NoEmptyCellError
from uncom.gesture import Ray3D
from uncom.tablemap import (
    annotate_depth,
    build_table_map,
    find_empty_cell_directional,
    grid_sites,
    select_cell_by_ray3d,
)
from uncom.types import Detection, DepthMap


def table_det(bbox=(0.0, 0.0, 1.0, 1.0)):
    return Detection(label="table", bbox=bbox, score=0.95, frame_id="f0")


def obj_det(bbox, score=0.9):
    return Detection(label="objects", bbox=bbox, score=score, frame_id="f0")


def map_for_sites(sites, bbox=(0.0, 0.0, 1.0, 1.0), objects=()):
    """Build a map whose sites are exactly ``sites`` (via tiny object boxes
    is not possible, so this goes through the private constructor path)."""
    from uncom.tablemap import _voronoi_cell_polygon
    from uncom.types import TableMap, VoronoiCell

    cells = []
    for site in sites:
        poly = _voronoi_cell_polygon(site, list(sites), bbox)
        cells.append(VoronoiCell(site=site, polygon=tuple(poly), occupied=False))
    return TableMap(table_bbox=bbox, cells=tuple(cells))


# --- construction -----------------------------------------------------------

def test_two_sites_split_at_perpendicular_bisector():
    m = map_for_sites([(0.25, 0.5), (0.75, 0.5)])
    assert len(m.cells) == 2
    left, right = m.cells
    assert max(x for x, _ in left.polygon) == pytest.approx(0.5)
    assert min(x for x, _ in right.polygon) == pytest.approx(0.5)
    assert left.area == pytest.approx(0.5)
    assert right.area == pytest.approx(0.5)


def test_grid_with_center_object_marks_middle_occupied():
    obj = obj_det((0.45, 0.45, 0.55, 0.55))
    m = build_table_map(table_det(), [obj], site_grid=(3, 3))
    # rasterized point-sampling oracle at 200x200
    sites = [c.site for c in m.cells]
    xs = (np.arange(200) + 0.5) / 200
    ys = (np.arange(200) + 0.5) / 200
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    d2 = ((pts[:, None, :] - np.array(sites)[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    in_obj = (
        (pts[:, 0] >= 0.45) & (pts[:, 0] <= 0.55)
        & (pts[:, 1] >= 0.45) & (pts[:, 1] <= 0.55)
    )
    oracle_occupied = {int(i) for i in np.unique(nearest[in_obj])}
    engine_occupied = {i for i, c in enumerate(m.cells) if c.occupied}
    assert engine_occupied == oracle_occupied
    center_cell = next(c for c in m.cells if c.site == (0.5, 0.5))
    assert center_cell.occupied
    corner_cell = next(
        c for c in m.cells if c.site == (1 / 6, 1 / 6)
    )
    assert not corner_cell.occupied


def test_object_covering_table_occupies_every_cell():
    m = build_table_map(table_det(), [obj_det((0.0, 0.0, 1.0, 1.0))], (3, 3))
    assert all(c.occupied for c in m.cells)


def test_zero_objects_yields_all_empty_map():
    m = build_table_map(table_det(), [], (4, 4))
    assert len(m.cells) == 16
    assert not any(c.occupied for c in m.cells)


def test_duplicate_object_site_merged():
    # object centered exactly on a grid site: no duplicate site, no crash
    m = build_table_map(table_det((0.0, 0.0, 1.0, 1.0)), [obj_det((0.4, 0.4, 0.6, 0.6))], (2, 2))
    sites = [c.site for c in m.cells]
    assert len(sites) == len(set(sites))


def test_object_center_outside_table_still_counts_for_occupancy():
    table = table_det((0.2, 0.2, 0.8, 0.8))
    overhang = obj_det((0.05, 0.4, 0.25, 0.6))  # center x=0.15 outside
    m = build_table_map(table, [overhang], (3, 3))
    assert all(c.site != (0.15, 0.5) for c in m.cells)
    assert any(c.occupied for c in m.cells)


# --- directional search -----------------------------------------------------

def test_left_picks_smaller_x():
    m = map_for_sites([(0.2, 0.5), (0.8, 0.5), (0.5, 0.5)])
    anchor = obj_det((0.45, 0.45, 0.55, 0.55))
    cell = find_empty_cell_directional(m, anchor, "left")
    assert cell.site == (0.2, 0.5)


def test_instructor_convention_mirrors_left():
    m = map_for_sites([(0.2, 0.5), (0.8, 0.5), (0.5, 0.5)])
    anchor = obj_det((0.45, 0.45, 0.55, 0.55))
    cell = find_empty_cell_directional(m, anchor, "left", convention="instructor")
    assert cell.site == (0.8, 0.5)


def test_next_to_tie_breaks_on_lower_cell_index():
    m = map_for_sites([(0.25, 0.5), (0.75, 0.5)])
    anchor = obj_det((0.375, 0.375, 0.625, 0.625))
    cell = find_empty_cell_directional(m, anchor, "next_to")
    assert cell.site == (0.25, 0.5)


def test_exhausted_direction_raises_no_empty_cell():
    from uncom.types import TableMap, VoronoiCell

    m = map_for_sites([(0.2, 0.5), (0.8, 0.5)])
    occupied = TableMap(
        table_bbox=m.table_bbox,
        cells=tuple(
            VoronoiCell(site=c.site, polygon=c.polygon, occupied=True)
            for c in m.cells
        ),
    )
    anchor = obj_det((0.45, 0.45, 0.55, 0.55))
    with pytest.raises(NoEmptyCellError):
        find_empty_cell_directional(occupied, anchor, "left")


def test_directional_result_satisfies_predicate_on_random_scenes():
    rng = random.Random(42)
    predicates = {
        "left": lambda c, a: c[0] < a[0],
        "right": lambda c, a: c[0] > a[0],
        "front": lambda c, a: c[1] > a[1],
        "behind": lambda c, a: c[1] < a[1],
        "near": lambda c, a: True,
    }
    for _ in range(200):
        objects = [
            obj_det(random_bbox(rng), score=rng.uniform(0.5, 1.0))
            for _ in range(rng.randint(0, 5))
        ]
        anchor = obj_det(random_bbox(rng))
        m = build_table_map(table_det(), objects + [anchor], (4, 4))
        kind = rng.choice(list(predicates))
        try:
            cell = find_empty_cell_directional(m, anchor, kind)
        except NoEmptyCellError:
            continue
        assert not cell.occupied
        assert predicates[kind](cell.site, anchor.center)


def random_bbox(rng, max_side=0.3):
    x0 = rng.uniform(0.0, 0.95)
    y0 = rng.uniform(0.0, 0.95)
    return (
        x0,
        y0,
        min(1.0, x0 + rng.uniform(0.02, max_side)),
        min(1.0, y0 + rng.uniform(0.02, max_side)),
    )


# --- depth annotation ---------------------------------------------------------

def test_constant_depth_annotates_constant():
    m = build_table_map(table_det(), [], (2, 2))
    depth = DepthMap(width=8, height=8, values=tuple([1.0] * 64))
    annotated = annotate_depth(m, depth)
    assert all(c.center_depth == 1.0 for c in annotated.cells)


def test_linear_ramp_depth_increases_with_site_x():
    m = build_table_map(table_det(), [], (2, 3))
    width, height = 60, 10
    values = tuple(px / (width - 1) for _ in range(height) for px in range(width))
    annotated = annotate_depth(m, DepthMap(width, height, values))
    cells = sorted(annotated.cells, key=lambda c: c.site[0])
    depths = [c.center_depth for c in cells]
    assert depths == sorted(depths)
    assert depths[0] < depths[-1]


def test_annotation_covers_every_cell():
    m = build_table_map(table_det(), [obj_det((0.1, 0.1, 0.3, 0.3))], (2, 2))
    annotated = annotate_depth(m, DepthMap(4, 4, tuple(range(16))))
    assert sum(1 for c in annotated.cells if c.center_depth is not None) == len(
        annotated.cells
    )


# --- 3D cell selection ---------------------------------------------------------

def flat_annotated_map(sites, occupied_sites=()):
    m = map_for_sites(sites)
    from uncom.types import TableMap, VoronoiCell

    cells = tuple(
        VoronoiCell(
            site=c.site,
            polygon=c.polygon,
            occupied=c.site in occupied_sites,
            center_depth=0.5,
        )
        for c in m.cells
    )
    return TableMap(table_bbox=m.table_bbox, cells=cells)


def test_exact_hit_wins():
    m = flat_annotated_map([(0.25, 0.35), (0.75, 0.75), (0.25, 0.75)])
    ray = Ray3D(origin=(0.0, 0.0, 0.5), direction=(1 / math.sqrt(2), 1 / math.sqrt(2), 0.0))
    choice = select_cell_by_ray3d(m, ray)
    assert choice.cell.site == (0.75, 0.75)
    assert not choice.occupied_fallback


def test_parallel_ray_over_cell_matches_brute_force():
    sites = [(0.2, 0.3), (0.5, 0.6), (0.8, 0.4)]
    m = flat_annotated_map(sites)
    ray = Ray3D(origin=(0.0, 0.62, 0.9), direction=(1.0, 0.0, 0.0))

    def brute(cell):
        ts = np.linspace(0.0, 3.0, 200_000)
        pts = np.stack(
            [ray.origin[0] + ts, np.full_like(ts, 0.62), np.full_like(ts, 0.9)], axis=1
        )
        target = np.array([cell.site[0], cell.site[1], cell.center_depth])
        return float(np.min(np.linalg.norm(pts - target, axis=1)))

    expected = min(m.cells, key=brute)
    assert select_cell_by_ray3d(m, ray).cell.site == expected.site


def test_single_occupied_cell_flagged_fallback():
    m = flat_annotated_map([(0.5, 0.5), (0.2, 0.2)], occupied_sites={(0.5, 0.5), (0.2, 0.2)})
    ray = Ray3D(origin=(0.5, 0.0, 0.5), direction=(0.0, 1.0, 0.0))
    choice = select_cell_by_ray3d(m, ray)
    assert choice.occupied_fallback
    assert choice.cell.site == (0.5, 0.5)


# --- map-level invariants ------------------------------------------------------

def test_tiling_and_nearest_site_on_random_maps():
    rng = random.Random(7)
    for _ in range(12):
        bbox = random_bbox(rng, max_side=0.9)
        n_objects = rng.randint(0, 8)
        objects = [
            obj_det(_bbox_inside(rng, bbox)) for _ in range(n_objects)
        ]
        m = build_table_map(table_det(bbox), objects, (4, 5))
        area = sum(c.area for c in m.cells)
        bbox_area = (bbox[2] - bbox[0]) * (bbox[3] - bbox[1])
        assert abs(area - bbox_area) < 1e-6
        sites = np.array([c.site for c in m.cells])
        for _ in range(100):
            p = (
                rng.uniform(bbox[0], bbox[2]),
                rng.uniform(bbox[1], bbox[3]),
            )
            containing = [
                c for c in m.cells if ShapelyPolygon(c.polygon).buffer(1e-12).contains(
                    __import__("shapely.geometry", fromlist=["Point"]).Point(p)
                )
            ]
            assert containing, p
            d = np.hypot(sites[:, 0] - p[0], sites[:, 1] - p[1])
            best = d.min()
            for cell in containing:
                site_d = math.hypot(cell.site[0] - p[0], cell.site[1] - p[1])
                assert site_d <= best + 1e-9


def _bbox_inside(rng, bbox):
    x0 = rng.uniform(bbox[0], max(bbox[0], bbox[2] - 0.05))
    y0 = rng.uniform(bbox[1], max(bbox[1], bbox[3] - 0.05))
    return (
        x0,
        y0,
        min(bbox[2], x0 + rng.uniform(0.02, 0.3)),
        min(bbox[3], y0 + rng.uniform(0.02, 0.3)),
    )


def test_table_map_debug_export_round_trips():
    from uncom.codec import decode_json, encode_json
    from uncom.types import TableMap

    m = build_table_map(table_det(), [obj_det((0.4, 0.4, 0.6, 0.6))], (3, 3))
    annotated = annotate_depth(m, DepthMap(8, 8, tuple(float(v) for v in range(64))))
    data = encode_json(annotated)
    assert decode_json(data, TableMap) == annotated


def test_occupancy_matches_shapely_intersection_on_random_scenes():
    rng = random.Random(99)
    for _ in range(40):
        objects = [obj_det(random_bbox(rng)) for _ in range(rng.randint(1, 10))]
        m = build_table_map(table_det(), objects, (4, 4))
        for cell in m.cells:
            poly = ShapelyPolygon(cell.polygon)
            truth = any(
                poly.intersection(shapely_box(*o.bbox)).area > 1e-10 for o in objects
            )
            assert cell.occupied == truth, (cell.site, [o.bbox for o in objects])
