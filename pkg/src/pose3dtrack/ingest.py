"""Canonical data model and parsers for the engine's input artifacts.

File formats handled here:

* Detections: UTF-8 JSON lines, one detection per line::

    {"frame": int, "box": [x_min, y_min, x_max, y_max],
     "mask": {"w": int, "h": int, "runs": [[start, len], ...]},
     "keypoints": [[u, v, conf], ...], "score": float}

  Mask runs are row-major pixel intervals and must be canonical: sorted,
  non-overlapping and non-adjacent (adjacent runs must be merged).

* Depth raster (one file per frame, ``<frame>.dpt``): ASCII header line
  ``DPTH <width> <height>\\n`` followed by width*height little-endian
  32-bit IEEE-754 floats, row-major.  Depth 0.0 marks an invalid pixel.

* Config: a single JSON object holding the camera model plus lifting,
  tracker and metric parameters (see ``EngineConfig``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

DEPTH_MAGIC = "DPTH"


# ---------------------------------------------------------------------------
# Skeletons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Skeleton:
    name: str
    joint_names: tuple[str, ...]
    root_index: int

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)


BASIC15 = Skeleton(
    name="basic15",
    joint_names=(
        "head", "neck",
        "r_shoulder", "r_elbow", "r_wrist",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_hip", "r_knee", "r_ankle",
        "l_hip", "l_knee", "l_ankle",
        "pelvis",
    ),
    root_index=14,
)

_SKELETONS: dict[str, Skeleton] = {BASIC15.name: BASIC15}


def register_skeleton(skeleton: Skeleton) -> None:
    _SKELETONS[skeleton.name] = skeleton


def get_skeleton(skeleton_id: str) -> Skeleton:
    try:
        return _SKELETONS[skeleton_id]
    except KeyError:
        raise ValidationError(f"unknown skeleton_id {skeleton_id!r}") from None


# ---------------------------------------------------------------------------
# Core value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics; world_scale converts depth units to output units."""

    fx: float
    fy: float
    cx: float
    cy: float
    world_scale: float = 1.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("CameraModel: fx and fy must be > 0")

    def back_project(self, u: float, v: float, z: float) -> tuple[float, float]:
        """Pixel (u, v) at depth z -> (X, Y)."""
        x = (u - self.cx) * z * self.world_scale / self.fx
        y = (v - self.cy) * z * self.world_scale / self.fy
        return x, y

    def project(self, x: float, y: float, z: float) -> tuple[float, float]:
        """Inverse of :meth:`back_project` for the same depth z."""
        u = x * self.fx / (z * self.world_scale) + self.cx
        v = y * self.fy / (z * self.world_scale) + self.cy
        return u, v


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned pixel box, continuous coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(
                f"Box2D: degenerate box ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    def clamp(self, width: int, height: int) -> "Box2D":
        x0 = min(max(self.x_min, 0.0), width - 1.0)
        x1 = min(max(self.x_max, 0.0), width - 1.0)
        y0 = min(max(self.y_min, 0.0), height - 1.0)
        y1 = min(max(self.y_max, 0.0), height - 1.0)
        if not (x0 < x1 and y0 < y1):
            raise ValidationError("Box2D: empty after clamping to image bounds")
        return Box2D(x0, y0, x1, y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Mask2D:
    """Run-length encoded binary mask over row-major pixel order."""

    width: int
    height: int
    runs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("Mask2D: non-positive dimensions")
        total = self.width * self.height
        prev_end = -1  # require a gap of >=1 so the encoding is canonical
        for start, length in self.runs:
            if length <= 0:
                raise ValidationError(f"Mask2D: run ({start}, {length}) has length <= 0")
            if start <= prev_end:
                raise ValidationError(
                    f"Mask2D: run starting at {start} overlaps or touches the previous run"
                )
            if start + length > total:
                raise ValidationError(
                    f"Mask2D: run ({start}, {length}) exceeds {self.width}x{self.height}"
                )
            prev_end = start + length

    @property
    def pixel_count(self) -> int:
        return sum(length for _, length in self.runs)


def decode_mask(mask: Mask2D) -> set[int]:
    """Exact set of row-major pixel indices covered by the mask."""
    covered: set[int] = set()
    for start, length in mask.runs:
        covered.update(range(start, start + length))
    return covered


def mask_indices(mask: Mask2D) -> np.ndarray:
    """Covered indices as a sorted int64 array (fast path for sampling)."""
    if not mask.runs:
        return np.empty(0, dtype=np.int64)
    parts = [np.arange(start, start + length, dtype=np.int64) for start, length in mask.runs]
    return np.concatenate(parts)


def encode_mask(indices, width: int, height: int) -> Mask2D:
    """Build the canonical Mask2D covering exactly the given pixel indices."""
    idx = np.unique(np.asarray(sorted(indices) if isinstance(indices, set) else indices,
                               dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= width * height):
        raise ValidationError("encode_mask: index out of bounds")
    runs: list[tuple[int, int]] = []
    if idx.size:
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [idx.size - 1]))
        for s, e in zip(starts, ends):
            runs.append((int(idx[s]), int(idx[e] - idx[s] + 1)))
    return Mask2D(width=width, height=height, runs=tuple(runs))


@dataclass(frozen=True)
class Keypoints2D:
    """Ordered 2D joints (u, v, confidence) for one skeleton convention."""

    joints: np.ndarray  # (J, 3) float64
    skeleton_id: str = BASIC15.name

    def __post_init__(self):
        arr = np.asarray(self.joints, dtype=np.float64)
        object.__setattr__(self, "joints", arr)
        skel = get_skeleton(self.skeleton_id)
        if arr.shape != (skel.joint_count, 3):
            raise ValidationError(
                f"Keypoints2D: expected {skel.joint_count}x3 joints for "
                f"{self.skeleton_id!r}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("Keypoints2D: non-finite coordinate")
        conf = arr[:, 2]
        if np.any(conf < 0.0) or np.any(conf > 1.0):
            raise ValidationError("Keypoints2D: confidence outside [0, 1]")


@dataclass(frozen=True)
class Detection:
    """One person in one frame as produced by the upstream networks."""

    frame_index: int
    box: Box2D
    mask: Mask2D
    keypoints: Keypoints2D
    score: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError("Detection: negative frame_index")
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"Detection: score {self.score} outside [0, 1]")
        if self.mask.pixel_count < 1:
            raise ValidationError("Detection: empty mask")
        if not _box_overlaps_mask(self.box, self.mask):
            raise ValidationError("Detection: box does not overlap mask support")


def _box_overlaps_mask(box: Box2D, mask: Mask2D) -> bool:
    clamped = box.clamp(mask.width, mask.height)
    c0, c1 = math.ceil(clamped.x_min), math.floor(clamped.x_max)
    r0, r1 = math.ceil(clamped.y_min), math.floor(clamped.y_max)
    if c0 > c1 or r0 > r1:
        return False
    w = mask.width
    for start, length in mask.runs:
        row_a, row_b = start // w, (start + length - 1) // w
        if row_b < r0 or row_a > r1:
            continue
        for row in range(max(row_a, r0), min(row_b, r1) + 1):
            seg_a = max(start, row * w) - row * w
            seg_b = min(start + length - 1, row * w + w - 1) - row * w
            if seg_a <= c1 and seg_b >= c0:
                return True
    return False


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth; 0.0 encodes an invalid pixel."""

    width: int
    height: int
    values: np.ndarray  # (height, width) float32

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("DepthMap: non-positive dimensions")
        if arr.shape != (self.height, self.width):
            raise ValidationError(
                f"DepthMap: payload shape {arr.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr.reshape(-1)))[0])
            raise ValidationError(f"DepthMap: non-finite value at pixel {bad}")
        if np.any(arr < 0.0):
            bad = int(np.flatnonzero(arr.reshape(-1) < 0.0)[0])
            raise ValidationError(f"DepthMap: negative depth at pixel {bad}")
        object.__setattr__(self, "values", arr)

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0.0


# ---------------------------------------------------------------------------
# Depth raster IO
# ---------------------------------------------------------------------------

def load_depth(path: str | Path) -> DepthMap:
    path = Path(path)
    with open(path, "rb") as f:
        header = f.readline()
        try:
            magic, w_s, h_s = header.decode("ascii").split()
            width, height = int(w_s), int(h_s)
        except (UnicodeDecodeError, ValueError):
            raise ParseError(f"{path}: bad depth header {header!r}") from None
        if magic != DEPTH_MAGIC:
            raise ParseError(f"{path}: expected magic {DEPTH_MAGIC!r}, got {magic!r}")
        if width <= 0 or height <= 0:
            raise ParseError(f"{path}: non-positive dimensions {width}x{height}")
        payload = f.read()
    expected = width * height * 4
    if len(payload) != expected:
        raise ParseError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for {width}x{height}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return DepthMap(width=width, height=height, values=values)


def write_depth(path: str | Path, depth: DepthMap) -> None:
    with open(path, "wb") as f:
        f.write(f"{DEPTH_MAGIC} {depth.width} {depth.height}\n".encode("ascii"))
        f.write(depth.values.astype("<f4", copy=False).tobytes())


# ---------------------------------------------------------------------------
# Detections file
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    detections: tuple[Detection, ...]


def _detection_from_obj(obj: dict, skeleton_id: str) -> Detection:
    box = Box2D(*(float(v) for v in obj["box"]))
    m = obj["mask"]
    mask = Mask2D(
        width=int(m["w"]),
        height=int(m["h"]),
        runs=tuple((int(s), int(l)) for s, l in m["runs"]),
    )
    kps = Keypoints2D(
        joints=np.asarray(obj["keypoints"], dtype=np.float64),
        skeleton_id=skeleton_id,
    )
    return Detection(
        frame_index=int(obj["frame"]),
        box=box.clamp(mask.width, mask.height),
        mask=mask,
        keypoints=kps,
        score=float(obj["score"]),
    )


def parse_detections(path: str | Path, skeleton_id: str = BASIC15.name) -> list[FrameDetections]:
    """Parse a JSON-lines detections file, grouped and sorted by frame.

    Within a frame, detections are ordered by descending score with input
    order as the stable tiebreak.
    """
    path = Path(path)
    records: list[tuple[int, float, int, Detection]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: invalid JSON ({e.msg})", line=lineno) from None
            try:
                det = _detection_from_obj(obj, skeleton_id)
            except (KeyError, TypeError) as e:
                raise ParseError(f"{path}: missing or malformed field ({e})", line=lineno) from None
            except ValidationError as e:
                raise ValidationError(f"{path}: line {lineno}: {e}") from None
            records.append((det.frame_index, -det.score, lineno, det))
    records.sort(key=lambda r: r[:3])
    frames: list[FrameDetections] = []
    for frame_index, _, _, det in records:
        if frames and frames[-1].frame_index == frame_index:
            frames[-1] = FrameDetections(frame_index, frames[-1].detections + (det,))
        else:
            frames.append(FrameDetections(frame_index, (det,)))
    return frames


def write_detections(path: str | Path, detections: list[Detection]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for det in detections:
            obj = {
                "frame": det.frame_index,
                "box": list(det.box.as_tuple()),
                "mask": {
                    "w": det.mask.width,
                    "h": det.mask.height,
                    "runs": [list(r) for r in det.mask.runs],
                },
                "keypoints": det.keypoints.joints.tolist(),
                "score": det.score,
            }
            f.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Sequence assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameInput:
    frame_index: int
    detections: tuple[Detection, ...]
    depth: DepthMap | Path

    def load(self) -> DepthMap:
        return self.depth if isinstance(self.depth, DepthMap) else load_depth(self.depth)


@dataclass(frozen=True)
class SequenceInput:
    frames: tuple[FrameInput, ...]
    camera: CameraModel
    fps: float = 30.0

    def __post_init__(self):
        last = -1
        for fr in self.frames:
            if fr.frame_index <= last:
                raise ValidationError("SequenceInput: frame_index not strictly increasing")
            last = fr.frame_index


def load_sequence(
    detections_path: str | Path,
    depth_dir: str | Path,
    camera: CameraModel,
    fps: float = 30.0,
    skeleton_id: str = BASIC15.name,
) -> SequenceInput:
    """Join a detections file with its per-frame depth rasters.

    The depth directory defines the frame set (one ``<frame>.dpt`` per video
    frame); frames without detections stay in the sequence so the tracker
    sees them as misses.  A detection whose frame has no raster is an error.
    """
    depth_dir = Path(depth_dir)
    by_frame = {fd.frame_index: fd.detections
                for fd in parse_detections(detections_path, skeleton_id=skeleton_id)}
    depth_frames = {}
    for path in depth_dir.glob("*.dpt"):
        try:
            depth_frames[int(path.stem)] = path
        except ValueError:
            continue
    missing = sorted(set(by_frame) - set(depth_frames))
    if missing:
        raise ValidationError(
            f"frame {missing[0]}: missing depth raster "
            f"{depth_dir / f'{missing[0]}.dpt'}"
        )
    frames = [
        FrameInput(index, by_frame.get(index, ()), depth=path)
        for index, path in sorted(depth_frames.items())
    ]
    return SequenceInput(frames=tuple(frames), camera=camera, fps=fps)


# ---------------------------------------------------------------------------
# Engine configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LifterSpec:
    name: str = "depth_median"
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PredictorSpec:
    name: str = "linear"
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LiftingConfig:
    min_thickness: float = 0.2
    depth_percentile: float = 1.0
    lifter: LifterSpec = field(default_factory=LifterSpec)

    def __post_init__(self):
        if self.min_thickness <= 0.0:
            raise ValidationError("LiftingConfig: min_thickness must be > 0")
        if not (0.0 <= self.depth_percentile < 50.0):
            raise ValidationError("LiftingConfig: depth_percentile must be in [0, 50)")

    @property
    def patch(self) -> int:
        return int(self.lifter.parameters.get("patch", 5))


@dataclass(frozen=True)
class TrackerConfig:
    iou_gate: float = 0.3
    max_gap: int = 10
    predictor_window: int = 5
    association_mode: str = "iou3d"
    min_track_score: float = 0.0
    predictor: PredictorSpec = field(default_factory=PredictorSpec)

    def __post_init__(self):
        if not (0.0 <= self.iou_gate <= 1.0):
            raise ValidationError("TrackerConfig: iou_gate outside [0, 1]")
        if self.max_gap < 0:
            raise ValidationError("TrackerConfig: max_gap must be >= 0")
        if self.predictor_window < 1:
            raise ValidationError("TrackerConfig: predictor_window must be >= 1")
        if self.association_mode not in ("iou3d", "iou2d"):
            raise ValidationError(
                f"TrackerConfig: unknown association_mode {self.association_mode!r}"
            )
        if not (0.0 <= self.min_track_score <= 1.0):
            raise ValidationError("TrackerConfig: min_track_score outside [0, 1]")


@dataclass(frozen=True)
class MetricConfig:
    radius: float = 0.5
    tau: float = 0.15

    def __post_init__(self):
        if self.radius <= 0.0 or self.tau <= 0.0:
            raise ValidationError("MetricConfig: radius and tau must be > 0")


@dataclass(frozen=True)
class EngineConfig:
    camera: CameraModel
    fps: float = 30.0
    skeleton_id: str = BASIC15.name
    lifting: LiftingConfig = field(default_factory=LiftingConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)


def config_from_dict(obj: dict) -> EngineConfig:
    try:
        cam = CameraModel(**obj["camera"])
    except KeyError:
        raise ValidationError("config: missing required 'camera' section") from None
    lifting_obj = dict(obj.get("lifting", {}))
    if "lifter" in lifting_obj:
        lifting_obj["lifter"] = LifterSpec(**lifting_obj["lifter"])
    tracker_obj = dict(obj.get("tracker", {}))
    if "predictor" in tracker_obj:
        tracker_obj["predictor"] = PredictorSpec(**tracker_obj["predictor"])
    return EngineConfig(
        camera=cam,
        fps=float(obj.get("fps", 30.0)),
        skeleton_id=obj.get("skeleton", BASIC15.name),
        lifting=LiftingConfig(**lifting_obj),
        tracker=TrackerConfig(**tracker_obj),
        metrics=MetricConfig(**obj.get("metrics", {})),
    )


def config_to_dict(cfg: EngineConfig) -> dict:
    return {
        "camera": {
            "fx": cfg.camera.fx, "fy": cfg.camera.fy,
            "cx": cfg.camera.cx, "cy": cfg.camera.cy,
            "world_scale": cfg.camera.world_scale,
        },
        "fps": cfg.fps,
        "skeleton": cfg.skeleton_id,
        "lifting": {
            "min_thickness": cfg.lifting.min_thickness,
            "depth_percentile": cfg.lifting.depth_percentile,
            "lifter": {"name": cfg.lifting.lifter.name,
                       "parameters": cfg.lifting.lifter.parameters},
        },
        "tracker": {
            "iou_gate": cfg.tracker.iou_gate,
            "max_gap": cfg.tracker.max_gap,
            "predictor_window": cfg.tracker.predictor_window,
            "association_mode": cfg.tracker.association_mode,
            "min_track_score": cfg.tracker.min_track_score,
            "predictor": {"name": cfg.tracker.predictor.name,
                          "parameters": cfg.tracker.predictor.parameters},
        },
        "metrics": {"radius": cfg.metrics.radius, "tau": cfg.metrics.tau},
    }


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e.msg})", line=e.lineno) from None
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    try:
        return config_from_dict(obj)
    except TypeError as e:
        raise ValidationError(f"{path}: {e}") from None


def write_config(path: str | Path, cfg: EngineConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")
