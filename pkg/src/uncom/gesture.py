"""Pointing-ray geometry: ray derivation, hand choice, distance queries.

The pointing direction runs from the index-finger base (landmark 5)
toward its tip (landmark 8); the ray itself starts at the tip and
extends forward. Distances use forward-ray semantics by default: a
point behind the fingertip is measured to the tip, not to the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DegeneratePointingError,
    DepthOutOfBoundsError,
    NoDetectionsError,
    NoHandDetectedError,
)
from .types import Detection, DepthMap, HandObservation, Point2, Point3

MIN_FINGER_SEPARATION = 1e-6

RAY = "ray"
LINE = "line"


@dataclass(frozen=True)
class PointingRay:
    """Pointing ray in 2D image space, with depth scalars for 3D lifting.

    ``origin`` is the fingertip (landmark 8) and ``base`` the finger base
    (landmark 5); ``direction`` is the unit vector base -> tip.
    """

    origin: Point2
    direction: Point2
    base: Point2
    base_z: float = 0.0
    tip_z: float = 0.0


@dataclass(frozen=True)
class Ray3D:
    """Depth-lifted pointing ray: x,y normalized, z relative depth."""

    origin: Point3
    direction: Point3


def pointing_ray(hand: HandObservation) -> PointingRay:
    """Derive the pointing ray from landmarks 5 and 8."""
    base = hand.finger_base
    tip = hand.finger_tip
    dx = tip.x - base.x
    dy = tip.y - base.y
    norm = math.hypot(dx, dy)
    if norm < MIN_FINGER_SEPARATION:
        raise DegeneratePointingError("index finger base and tip coincide")
    return PointingRay(
        origin=(tip.x, tip.y),
        direction=(dx / norm, dy / norm),
        base=(base.x, base.y),
        base_z=base.z,
        tip_z=tip.z,
    )


def select_pointing_hand(
    hands: list[HandObservation] | tuple[HandObservation, ...],
    z_sign: str = "closer_is_smaller",
) -> HandObservation:
    """Pick the pointing hand: the one whose fingertip is closer to the camera.

    Ties break on higher landmark confidence when provided, then on list
    order, so the choice is deterministic.
    """
    if not hands:
        raise NoHandDetectedError("no hands in frame")
    if len(hands) == 1:
        return hands[0]

    def closeness(h: HandObservation) -> float:
        z = h.finger_tip.z
        return z if z_sign == "closer_is_smaller" else -z

    best = hands[0]
    for hand in hands[1:]:
        c, b = closeness(hand), closeness(best)
        if c < b:
            best = hand
        elif c == b:
            hc = hand.confidence if hand.confidence is not None else float("-inf")
            bc = best.confidence if best.confidence is not None else float("-inf")
            if hc > bc:
                best = hand
    return best


def _dist_point_ray(
    origin: tuple[float, ...],
    direction: tuple[float, ...],
    point: tuple[float, ...],
    semantics: str = RAY,
) -> float:
    rel = tuple(p - o for p, o in zip(point, origin))
    t = sum(r * d for r, d in zip(rel, direction))
    if semantics == RAY and t < 0.0:
        return math.sqrt(sum(r * r for r in rel))
    closest = tuple(o + t * d for o, d in zip(origin, direction))
    return math.sqrt(sum((p - c) ** 2 for p, c in zip(point, closest)))


def distance_point_to_ray(
    ray: PointingRay,
    point: Point2,
    semantics: str = RAY,
    aspect: float = 1.0,
) -> float:
    """Distance from a point to the forward pointing ray.

    ``aspect`` scales x before measuring (width/height correction); the
    default of 1.0 measures in plain normalized coordinates. ``semantics``
    may be "line" to measure against the infinite line instead.
    """
    if aspect == 1.0:
        return _dist_point_ray(ray.origin, ray.direction, point, semantics)
    origin = (ray.origin[0] * aspect, ray.origin[1])
    dvec = (ray.direction[0] * aspect, ray.direction[1])
    norm = math.hypot(*dvec)
    dvec = (dvec[0] / norm, dvec[1] / norm)
    return _dist_point_ray(origin, dvec, (point[0] * aspect, point[1]), semantics)


def select_nearest_detection(
    ray: PointingRay,
    detections: list[Detection] | tuple[Detection, ...],
    semantics: str = RAY,
    aspect: float = 1.0,
) -> Detection:
    """Argmin of bbox-center distance to the ray.

    Ties break on higher score, then on lower list index.
    """
    if not detections:
        raise NoDetectionsError("no detections to select from")
    best = None
    best_key = None
    for index, det in enumerate(detections):
        dist = distance_point_to_ray(ray, det.center, semantics, aspect)
        key = (dist, -det.score, index)
        if best_key is None or key < best_key:
            best, best_key = det, key
    return best


def _depth_at_normalized(depth: DepthMap, x: float, y: float) -> float:
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DepthOutOfBoundsError(
            f"point ({x:.4f}, {y:.4f}) outside the depth map"
        )
    px = min(depth.width - 1, int(x * depth.width))
    py = min(depth.height - 1, int(y * depth.height))
    return depth.at_pixel(px, py)


def lift_ray_3d(ray: PointingRay, depth: DepthMap) -> Ray3D:
    """Lift the 2D pointing ray into 3D using scene depth.

    Landmark z is discarded in favor of the depth estimate so finger and
    object depths share one scale.
    """
    tip_z = _depth_at_normalized(depth, *ray.origin)
    base_z = _depth_at_normalized(depth, *ray.base)
    tip3 = (ray.origin[0], ray.origin[1], tip_z)
    base3 = (ray.base[0], ray.base[1], base_z)
    delta = tuple(t - b for t, b in zip(tip3, base3))
    norm = math.sqrt(sum(d * d for d in delta))
    if norm < MIN_FINGER_SEPARATION:
        raise DegeneratePointingError("3D finger endpoints coincide")
    return Ray3D(origin=tip3, direction=tuple(d / norm for d in delta))


def distance_point_to_ray3d(
    ray: Ray3D, point: Point3, semantics: str = RAY
) -> float:
    return _dist_point_ray(ray.origin, ray.direction, point, semantics)
