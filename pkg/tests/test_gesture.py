"""Pointing geometry against independent brute-force oracles."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from support.scenes import pointing_hand
from uncom.errors import (
    DegeneratePointingError,
    DepthOutOfBoundsError,
    NoDetectionsError,
    NoHandDetectedError,
)
from uncom.gesture import (
    PointingRay,
    distance_point_to_ray,
    lift_ray_3d,
    pointing_ray,
    select_nearest_detection,
    select_pointing_hand,
)
from uncom.types import Detection, DepthMap, HandObservation, Landmark


def hand_with_finger(base, tip, z=0.0):
    landmarks = [Landmark(0.5, 0.5, z) for _ in range(21)]
    landmarks[5] = Landmark(base[0], base[1], z)
    landmarks[8] = Landmark(tip[0], tip[1], z)
    return HandObservation(landmarks=tuple(landmarks))


def ray_at(origin, direction, base=None):
    norm = math.hypot(*direction)
    d = (direction[0] / norm, direction[1] / norm)
    if base is None:
        base = (origin[0] - d[0] * 0.1, origin[1] - d[1] * 0.1)
    return PointingRay(origin=origin, direction=d, base=base)


# --- pointing_ray -----------------------------------------------------------

def test_vertical_pointing_vector():
    ray = pointing_ray(hand_with_finger(base=(0.4, 0.6), tip=(0.4, 0.4)))
    assert ray.origin == (0.4, 0.4)
    assert ray.direction == pytest.approx((0.0, -1.0))


def test_horizontal_pointing_vector():
    ray = pointing_ray(hand_with_finger(base=(0.3, 0.5), tip=(0.5, 0.5)))
    assert ray.direction == pytest.approx((1.0, 0.0))


def test_coincident_landmarks_degenerate():
    with pytest.raises(DegeneratePointingError):
        pointing_ray(hand_with_finger(base=(0.5, 0.5), tip=(0.5, 0.5)))


def test_direction_flips_when_landmarks_swap():
    a = pointing_ray(hand_with_finger(base=(0.3, 0.4), tip=(0.6, 0.7)))
    b = pointing_ray(hand_with_finger(base=(0.6, 0.7), tip=(0.3, 0.4)))
    assert a.direction[0] == pytest.approx(-b.direction[0])
    assert a.direction[1] == pytest.approx(-b.direction[1])


def test_unit_norm_within_tolerance():
    ray = pointing_ray(hand_with_finger(base=(0.31, 0.47), tip=(0.52, 0.33)))
    assert math.hypot(*ray.direction) == pytest.approx(1.0, abs=1e-9)


# --- select_pointing_hand ----------------------------------------------------

def test_closer_fingertip_wins_smaller_z():
    near = hand_with_finger((0.3, 0.5), (0.4, 0.4), z=-0.3)
    far = hand_with_finger((0.6, 0.5), (0.7, 0.4), z=-0.1)
    assert select_pointing_hand([far, near], "closer_is_smaller") is near


def test_closer_fingertip_wins_larger_z_convention():
    near = hand_with_finger((0.3, 0.5), (0.4, 0.4), z=0.9)
    far = hand_with_finger((0.6, 0.5), (0.7, 0.4), z=0.2)
    assert select_pointing_hand([far, near], "closer_is_larger") is near


def test_single_hand_returned_unconditionally():
    only = hand_with_finger((0.3, 0.5), (0.4, 0.4), z=5.0)
    assert select_pointing_hand([only]) is only


def test_empty_hand_list_raises():
    with pytest.raises(NoHandDetectedError):
        select_pointing_hand([])


def test_z_tie_breaks_on_confidence_then_order():
    a = hand_with_finger((0.3, 0.5), (0.4, 0.4), z=-0.2)
    b = HandObservation(
        landmarks=hand_with_finger((0.6, 0.5), (0.7, 0.4), z=-0.2).landmarks,
        confidence=0.9,
    )
    assert select_pointing_hand([a, b]) is b
    assert select_pointing_hand([a, hand_with_finger((0.6, 0.5), (0.7, 0.4), z=-0.2)]) is a


# --- distance_point_to_ray ---------------------------------------------------

def test_perpendicular_distance():
    ray = ray_at((0.0, 0.0), (1.0, 0.0))
    assert distance_point_to_ray(ray, (3.0, 4.0)) == pytest.approx(4.0)


def test_point_behind_origin_uses_euclidean():
    ray = ray_at((0.0, 0.0), (1.0, 0.0))
    assert distance_point_to_ray(ray, (-2.0, 0.0)) == pytest.approx(2.0)


def test_diagonal_ray_distance_matches_dense_sampling():
    ray = ray_at((0.0, 0.0), (1.0, 1.0))
    exact = distance_point_to_ray(ray, (1.0, 0.0))
    assert exact == pytest.approx(math.sqrt(2) / 2, abs=1e-9)
    ts = np.linspace(0.0, 4.0, 100_000)
    points = np.stack([ray.direction[0] * ts, ray.direction[1] * ts], axis=1)
    brute = np.min(np.hypot(points[:, 0] - 1.0, points[:, 1] - 0.0))
    assert exact == pytest.approx(float(brute), abs=1e-4)


def test_line_semantics_ignore_forward_constraint():
    ray = ray_at((0.0, 0.0), (1.0, 0.0))
    assert distance_point_to_ray(ray, (-2.0, 0.0), semantics="line") == pytest.approx(0.0)


def test_zero_distance_iff_on_forward_ray():
    ray = ray_at((0.2, 0.2), (1.0, 0.5))
    on = (0.2 + 0.4 * ray.direction[0], 0.2 + 0.4 * ray.direction[1])
    assert distance_point_to_ray(ray, on) < 1e-9
    behind = (0.2 - 0.4 * ray.direction[0], 0.2 - 0.4 * ray.direction[1])
    assert distance_point_to_ray(ray, behind) > 1e-3


def brute_force_distance(ray, point, samples=100_000, reach=4.0):
    ts = np.linspace(0.0, reach, samples)
    xs = ray.origin[0] + ray.direction[0] * ts
    ys = ray.origin[1] + ray.direction[1] * ts
    return float(np.min(np.hypot(xs - point[0], ys - point[1])))


def test_randomized_distances_match_brute_force():
    rng = random.Random(20240811)
    for _ in range(200):
        origin = (rng.uniform(0, 1), rng.uniform(0, 1))
        direction = (rng.uniform(-1, 1), rng.uniform(-1, 1))
        if math.hypot(*direction) < 1e-3:
            continue
        ray = ray_at(origin, direction)
        point = (rng.uniform(0, 1), rng.uniform(0, 1))
        exact = distance_point_to_ray(ray, point)
        assert exact == pytest.approx(brute_force_distance(ray, point), abs=1e-4)


# --- select_nearest_detection -------------------------------------------------

def det(center, score=0.5, label="thing", frame="f0", half=0.05):
    bbox = (
        max(0.0, center[0] - half),
        max(0.0, center[1] - half),
        min(1.0, center[0] + half),
        min(1.0, center[1] + half),
    )
    return Detection(label=label, bbox=bbox, score=score, frame_id=frame)


def test_nearest_center_wins():
    ray = ray_at((0.0, 0.0), (1.0, 1.0))
    near = det((0.5, 0.5))
    far = det((0.9, 0.1))
    assert select_nearest_detection(ray, [far, near]) is near


def test_singleton_wins_regardless_of_ray():
    ray = ray_at((0.0, 0.0), (1.0, 0.0))
    only = det((0.1, 0.9))
    assert select_nearest_detection(ray, [only]) is only


def test_empty_detection_list_raises():
    with pytest.raises(NoDetectionsError):
        select_nearest_detection(ray_at((0, 0), (1, 0)), [])


def test_mirror_tie_breaks_on_lower_index():
    # dyadic coordinates give a bit-exact distance tie across the ray
    ray = ray_at((0.0, 0.5), (1.0, 0.0))
    upper = det((0.5, 0.25), score=0.5, half=0.125)
    lower = det((0.5, 0.75), score=0.5, half=0.125)
    assert select_nearest_detection(ray, [upper, lower]) is upper
    assert select_nearest_detection(ray, [lower, upper]) is lower


def test_tie_breaks_on_higher_score_first():
    ray = ray_at((0.0, 0.5), (1.0, 0.0))
    weak = det((0.5, 0.25), score=0.4, half=0.125)
    strong = det((0.5, 0.75), score=0.8, half=0.125)
    assert select_nearest_detection(ray, [weak, strong]) is strong


def test_distractor_monotonicity():
    rng = random.Random(77)
    ray = ray_at((0.1, 0.1), (0.8, 0.6))
    dets = [det((rng.uniform(0, 1), rng.uniform(0, 1))) for _ in range(5)]
    chosen = select_nearest_detection(ray, dets)
    worst = max(distance_point_to_ray(ray, d.center) for d in dets)
    far_center = (
        ray.origin[0] - ray.direction[0] * (worst + 0.5),
        ray.origin[1] - ray.direction[1] * (worst + 0.5),
    )
    clamped = (min(max(far_center[0], 0.06), 0.94), min(max(far_center[1], 0.06), 0.94))
    if distance_point_to_ray(ray, clamped) > worst:
        assert select_nearest_detection(ray, dets + [det(clamped)]) is chosen


def test_uniform_scaling_preserves_argmin():
    ray = ray_at((0.05, 0.1), (0.9, 0.4))
    dets = [det((0.3, 0.35)), det((0.7, 0.2)), det((0.5, 0.6))]
    base = select_nearest_detection(ray, dets)
    for scale in (0.25, 0.5):
        scaled_ray = PointingRay(
            origin=(ray.origin[0] * scale, ray.origin[1] * scale),
            direction=ray.direction,
            base=(ray.base[0] * scale, ray.base[1] * scale),
        )
        scaled = [
            Detection(
                label=d.label,
                bbox=tuple(v * scale for v in d.bbox),
                score=d.score,
                frame_id=d.frame_id,
            )
            for d in dets
        ]
        assert select_nearest_detection(scaled_ray, scaled).label == base.label
        assert scaled[dets.index(base)] == select_nearest_detection(scaled_ray, scaled)


def test_aspect_correction_scales_x_distances():
    behind = ray_at((0.5, 0.5), (0.0, -1.0))
    assert distance_point_to_ray(behind, (0.3, 0.5)) == pytest.approx(0.2)
    assert distance_point_to_ray(behind, (0.3, 0.5), aspect=2.0) == pytest.approx(0.4)


def test_aspect_correction_can_flip_argmin():
    ray = ray_at((0.5, 0.5), (0.0, -1.0))
    cand_behind = det((0.5, 0.6), score=0.5)  # pure-y offset, aspect-invariant
    cand_perp = det((0.38, 0.3), score=0.5)  # pure-x offset, scales with aspect
    assert select_nearest_detection(ray, [cand_behind, cand_perp]) is cand_behind
    assert (
        select_nearest_detection(ray, [cand_behind, cand_perp], aspect=0.5)
        is cand_perp
    )


# --- lift_ray_3d --------------------------------------------------------------

def test_constant_depth_keeps_ray_flat():
    depth = DepthMap(width=8, height=8, values=tuple([2.0] * 64))
    ray = ray_at((0.5, 0.5), (1.0, 0.0), base=(0.3, 0.5))
    lifted = lift_ray_3d(ray, depth)
    assert lifted.direction[2] == pytest.approx(0.0)
    assert lifted.origin == (0.5, 0.5, 2.0)


def test_straight_at_camera_points_negative_z():
    values = []
    for py in range(8):
        for px in range(8):
            values.append(1.0 if px >= 4 else 2.0)
    depth = DepthMap(width=8, height=8, values=tuple(values))
    ray = ray_at((0.8, 0.5), (1.0, 0.0), base=(0.2, 0.5))
    lifted = lift_ray_3d(ray, depth)
    assert lifted.direction[2] < 0


def test_linear_ramp_slope_appears_in_direction():
    width, height = 64, 8
    values = []
    for py in range(height):
        for px in range(width):
            values.append(px / (width - 1))
    depth = DepthMap(width=width, height=height, values=tuple(values))
    ray = ray_at((0.75, 0.5), (1.0, 0.0), base=(0.25, 0.5))
    lifted = lift_ray_3d(ray, depth)
    run = 0.5
    rise = depth.at_pixel(int(0.75 * width), 4) - depth.at_pixel(int(0.25 * width), 4)
    expected = rise / math.hypot(run, rise)
    assert lifted.direction[2] == pytest.approx(expected, abs=1e-9)


def test_out_of_bounds_endpoint_raises():
    depth = DepthMap(width=4, height=4, values=tuple([1.0] * 16))
    ray = PointingRay(origin=(0.5, 0.5), direction=(1.0, 0.0), base=(-0.2, 0.5))
    with pytest.raises(DepthOutOfBoundsError):
        lift_ray_3d(ray, depth)


def test_scene_builder_hand_points_exactly_at_target():
    hand = pointing_hand(tip=(0.3, 0.3), at=(0.7, 0.8))
    ray = pointing_ray(hand)
    assert distance_point_to_ray(ray, (0.7, 0.8)) < 1e-12
