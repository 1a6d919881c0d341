"""Depth-based 2D-to-3D box lifting and axis-aligned IOU measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySupportError, ValidationError
from .ingest import Box2D, CameraModel, DepthMap, Mask2D, mask_indices


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned 3D box in meters; z grows away from the camera."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max
                and self.z_min < self.z_max):
            raise ValidationError(
                f"Box3D: degenerate extents x[{self.x_min}, {self.x_max}] "
                f"y[{self.y_min}, {self.y_max}] z[{self.z_min}, {self.z_max}]"
            )

    @property
    def volume(self) -> float:
        return ((self.x_max - self.x_min)
                * (self.y_max - self.y_min)
                * (self.z_max - self.z_min))

    def translated(self, dx: float, dy: float, dz: float) -> "Box3D":
        return Box3D(self.x_min + dx, self.x_max + dx,
                     self.y_min + dy, self.y_max + dy,
                     self.z_min + dz, self.z_max + dz)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.x_max, self.y_min,
                         self.y_max, self.z_min, self.z_max], dtype=np.float64)

    @staticmethod
    def from_array(arr) -> "Box3D":
        x0, x1, y0, y1, z0, z1 = (float(v) for v in arr)
        return Box3D(x0, x1, y0, y1, z0, z1)


def _mask_box_depths(depth: DepthMap, mask: Mask2D, box: Box2D) -> np.ndarray:
    """Valid depth values over decode(mask) ∩ clamp(box), as float64."""
    if (mask.width, mask.height) != (depth.width, depth.height):
        raise ValidationError(
            f"mask is {mask.width}x{mask.height} but depth is "
            f"{depth.width}x{depth.height}"
        )
    clamped = box.clamp(depth.width, depth.height)
    idx = mask_indices(mask)
    cols = idx % depth.width
    rows = idx // depth.width
    inside = ((cols >= clamped.x_min) & (cols <= clamped.x_max)
              & (rows >= clamped.y_min) & (rows <= clamped.y_max))
    vals = depth.values.reshape(-1)[idx[inside]]
    return vals[vals > 0.0].astype(np.float64)


def depth_extrema(
    depth: DepthMap,
    mask: Mask2D,
    box: Box2D,
    percentile: float = 0.0,
) -> tuple[float, float]:
    """Near/far depth over the masked box region.

    With percentile p > 0 the p-th and (100-p)-th percentiles are used
    instead of the absolute extrema, which keeps single outlier pixels from
    inflating the person's depth span.
    """
    vals = _mask_box_depths(depth, mask, box)
    if vals.size == 0:
        raise EmptySupportError("no valid depth pixel inside mask ∩ box")
    if percentile <= 0.0:
        return float(vals.min()), float(vals.max())
    return (float(np.percentile(vals, percentile)),
            float(np.percentile(vals, 100.0 - percentile)))


def lift_box(
    box: Box2D,
    depth: DepthMap,
    mask: Mask2D,
    cam: CameraModel,
    min_thickness: float = 0.2,
    percentile: float = 0.0,
) -> Box3D:
    """Lift a 2D person box to a 3D box using its masked depth support.

    The x/y extents back-project the 2D corners at the representative depth
    z_mid = (z_min + z_max) / 2; the z extent is the measured depth span,
    inflated symmetrically to at least min_thickness.
    """
    z_min, z_max = depth_extrema(depth, mask, box, percentile=percentile)
    z_mid = (z_min + z_max) / 2.0
    xa, ya = cam.back_project(box.x_min, box.y_min, z_mid)
    xb, yb = cam.back_project(box.x_max, box.y_max, z_mid)
    if z_max - z_min < min_thickness:
        half = min_thickness / 2.0
        z_min, z_max = z_mid - half, z_mid + half
    return Box3D(min(xa, xb), max(xa, xb), min(ya, yb), max(ya, yb), z_min, z_max)


def _overlap(a_min: float, a_max: float, b_min: float, b_max: float) -> float:
    return max(0.0, min(a_max, b_max) - max(a_min, b_min))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume intersection-over-union of two axis-aligned 3D boxes."""
    ov = (_overlap(a.x_min, a.x_max, b.x_min, b.x_max)
          * _overlap(a.y_min, a.y_max, b.y_min, b.y_max)
          * _overlap(a.z_min, a.z_max, b.z_min, b.z_max))
    if ov == 0.0:
        return 0.0
    return ov / (a.volume + b.volume - ov)


def iou2d(a: Box2D, b: Box2D) -> float:
    """Area intersection-over-union of two axis-aligned 2D boxes."""
    ov = (_overlap(a.x_min, a.x_max, b.x_min, b.x_max)
          * _overlap(a.y_min, a.y_max, b.y_min, b.y_max))
    if ov == 0.0:
        return 0.0
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return ov / (area_a + area_b - ov)


def iou3d_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise 3D IOU for box arrays shaped (n, 6) and (m, 6).

    Columns are (x_min, x_max, y_min, y_max, z_min, z_max), matching
    :meth:`Box3D.as_array`.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 6)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 6)
    ov = np.ones((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo, hi in ((0, 1), (2, 3), (4, 5)):
        ov *= np.maximum(
            0.0,
            np.minimum(a[:, hi, None], b[None, :, hi])
            - np.maximum(a[:, lo, None], b[None, :, lo]),
        )
    vol_a = (a[:, 1] - a[:, 0]) * (a[:, 3] - a[:, 2]) * (a[:, 5] - a[:, 4])
    vol_b = (b[:, 1] - b[:, 0]) * (b[:, 3] - b[:, 2]) * (b[:, 5] - b[:, 4])
    union = vol_a[:, None] + vol_b[None, :] - ov
    with np.errstate(invalid="ignore"):
        out = np.where(ov > 0.0, ov / union, 0.0)
    return out


def iou2d_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise 2D IOU for box arrays shaped (n, 4) and (m, 4) in xyxy order."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ov = np.ones((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo, hi in ((0, 2), (1, 3)):
        ov *= np.maximum(
            0.0,
            np.minimum(a[:, hi, None], b[None, :, hi])
            - np.maximum(a[:, lo, None], b[None, :, lo]),
        )
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - ov
    with np.errstate(invalid="ignore"):
        out = np.where(ov > 0.0, ov / union, 0.0)
    return out
