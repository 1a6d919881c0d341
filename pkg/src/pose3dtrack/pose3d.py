"""2D keypoint lifting to world-frame 3D poses.

The baseline lifter samples the depth map around each joint pixel instead of
regressing root-relative offsets, so every output coordinate is traceable to
input pixels.  Learned lifters can be registered under a ``LifterSpec`` name
and slot in behind the same interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import EmptySupportError, ValidationError
from .geometry import depth_extrema
from .ingest import (
    CameraModel,
    Detection,
    DepthMap,
    LifterSpec,
    LiftingConfig,
    get_skeleton,
    mask_indices,
)


@dataclass(frozen=True)
class Pose3D:
    """World-frame joints (X, Y, Z, confidence) with a designated root."""

    joints: np.ndarray  # (J, 4) float64
    root_index: int
    skeleton_id: str

    def __post_init__(self):
        arr = np.asarray(self.joints, dtype=np.float64)
        object.__setattr__(self, "joints", arr)
        skel = get_skeleton(self.skeleton_id)
        if arr.shape != (skel.joint_count, 4):
            raise ValidationError(
                f"Pose3D: expected {skel.joint_count}x4 joints for "
                f"{self.skeleton_id!r}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("Pose3D: non-finite joint value")
        if not (0 <= self.root_index < skel.joint_count):
            raise ValidationError(f"Pose3D: root_index {self.root_index} out of range")

    @property
    def root(self) -> np.ndarray:
        return self.joints[self.root_index, :3]


class Lifter(Protocol):
    def __call__(self, det: Detection, depth: DepthMap, cam: CameraModel) -> Pose3D: ...


def _window_median(
    depth: DepthMap,
    support: np.ndarray,
    u: float,
    v: float,
    patch: int,
    band: tuple[float, float] | None = None,
) -> float | None:
    """Median valid depth over the patch window restricted to `support`.

    `support` is a boolean (h, w) array.  An optional depth band rejects
    samples outside [band[0], band[1]], which keeps an overlapping person's
    surface from leaking into this person's joints.
    """
    r = patch // 2
    ci, ri = int(round(u)), int(round(v))
    c0, c1 = max(ci - r, 0), min(ci + r, depth.width - 1)
    r0, r1 = max(ri - r, 0), min(ri + r, depth.height - 1)
    if c0 > c1 or r0 > r1:
        return None
    window = depth.values[r0:r1 + 1, c0:c1 + 1]
    picked = support[r0:r1 + 1, c0:c1 + 1] & (window > 0.0)
    vals = window[picked].astype(np.float64)
    if band is not None and vals.size:
        vals = vals[(vals >= band[0]) & (vals <= band[1])]
    if vals.size == 0:
        return None
    return float(np.median(vals))


def lift_pose(
    det: Detection,
    depth: DepthMap,
    cam: CameraModel,
    patch: int = 5,
    percentile: float = 0.0,
) -> Pose3D:
    """Lift one detection's 2D keypoints into world coordinates.

    Per joint with confidence > 0, Z is the median valid depth over the
    patch window intersected with the person's mask, falling back to the
    window intersected with the box (restricted to the person's measured
    depth band), then to the person's mid depth.  X and Y follow from the
    pinhole model at that Z.  Joints with confidence 0 inherit the root's
    coordinates so pose arity stays fixed.
    """
    if patch < 1 or patch % 2 == 0:
        raise ValidationError(f"patch must be odd and >= 1, got {patch}")
    skel = get_skeleton(det.keypoints.skeleton_id)
    kps = det.keypoints.joints
    if kps[skel.root_index, 2] <= 0.0:
        raise EmptySupportError("root joint has zero confidence; cannot place pose")

    z_min, z_max = depth_extrema(depth, det.mask, det.box, percentile=percentile)
    z_mid = (z_min + z_max) / 2.0

    mask_support = np.zeros((depth.height, depth.width), dtype=bool)
    mask_support.reshape(-1)[mask_indices(det.mask)] = True
    clamped = det.box.clamp(depth.width, depth.height)
    box_support = np.zeros_like(mask_support)
    bc0, bc1 = math.ceil(clamped.x_min), math.floor(clamped.x_max)
    br0, br1 = math.ceil(clamped.y_min), math.floor(clamped.y_max)
    if bc0 <= bc1 and br0 <= br1:
        box_support[br0:br1 + 1, bc0:bc1 + 1] = True

    joints = np.empty((skel.joint_count, 4), dtype=np.float64)
    for j in range(skel.joint_count):
        u, v, conf = kps[j]
        if conf <= 0.0:
            joints[j] = (0.0, 0.0, 0.0, 0.0)  # filled from root below
            continue
        z = _window_median(depth, mask_support, u, v, patch)
        if z is None:
            z = _window_median(depth, box_support, u, v, patch, band=(z_min, z_max))
        if z is None:
            z = z_mid
        x, y = cam.back_project(u, v, z)
        joints[j] = (x, y, z, conf)

    root = joints[skel.root_index]
    for j in range(skel.joint_count):
        if kps[j, 2] <= 0.0:
            joints[j, :3] = root[:3]
            joints[j, 3] = 0.0
    return Pose3D(joints=joints, root_index=skel.root_index, skeleton_id=skel.name)


def place_relative(poses: list[Pose3D]) -> list[Pose3D]:
    """Anchor hook for root-relative lifters; the identity in the baseline.

    Baseline poses are already world-framed, so relative depth ordering
    between people in a frame is preserved as-is.  A learned root-relative
    lifter would have its output translated onto the depth-derived root
    here before the poses reach the tracker.
    """
    return list(poses)


# ---------------------------------------------------------------------------
# Lifter registry
# ---------------------------------------------------------------------------

LifterFactory = Callable[[dict, LiftingConfig], Lifter]
_LIFTERS: dict[str, LifterFactory] = {}


def register_lifter(name: str, factory: LifterFactory) -> None:
    _LIFTERS[name] = factory


def make_lifter(spec: LifterSpec, lifting: LiftingConfig) -> Lifter:
    try:
        factory = _LIFTERS[spec.name]
    except KeyError:
        raise ValidationError(f"unknown lifter {spec.name!r}") from None
    return factory(spec.parameters, lifting)


def _depth_median_factory(params: dict, lifting: LiftingConfig) -> Lifter:
    patch = int(params.get("patch", 5))

    def lifter(det: Detection, depth: DepthMap, cam: CameraModel) -> Pose3D:
        return lift_pose(det, depth, cam, patch=patch,
                         percentile=lifting.depth_percentile)

    return lifter


register_lifter("depth_median", _depth_median_factory)
