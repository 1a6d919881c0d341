"""Frame-to-frame identity tracking over lifted 3D boxes and poses.

Association is an optimal one-to-one assignment on IOU (3D by default, with
2D image-space IOU available as the traditional baseline), gated by a
minimum IOU.  Tracks that miss a detection are extended with predicted
states from a trajectory predictor so they can re-capture their person
after an occlusion gap; trailing predictions are discarded when a track
ends, so gaps are bridged but exits are never hallucinated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .errors import ParseError, PoseTrackError, SequencingError, ValidationError
from .geometry import Box3D, iou2d_matrix, iou3d_matrix, lift_box
from .ingest import (
    Box2D,
    Detection,
    LiftingConfig,
    PredictorSpec,
    SequenceInput,
    TrackerConfig,
    get_skeleton,
)
from .pose3d import Pose3D, make_lifter, place_relative

OBSERVED = "obs"
PREDICTED = "pred"

# Breaks exact assignment ties toward low (track, detection) index pairs
# without disturbing genuinely different totals.
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class TrackState:
    frame_index: int
    kind: str  # OBSERVED or PREDICTED
    box3d: Box3D
    pose3d: Pose3D
    box2d: Box2D | None = None
    detection: Detection | None = None


@dataclass
class Track:
    track_id: int
    birth_frame: int
    states: list[TrackState] = field(default_factory=list)
    gap_run: int = 0
    terminated: bool = False

    @property
    def last_state(self) -> TrackState:
        return self.states[-1]

    def observed_states(self) -> list[TrackState]:
        return [s for s in self.states if s.kind == OBSERVED]

    def drop_trailing_predictions(self) -> None:
        while self.states and self.states[-1].kind == PREDICTED:
            self.states.pop()
        self.gap_run = 0


# ---------------------------------------------------------------------------
# Assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Association:
    matches: tuple[tuple[int, int], ...]  # (track_id, det_index)
    unmatched_tracks: tuple[int, ...]
    unmatched_detections: tuple[int, ...]


def assign_by_iou(iou: np.ndarray, gate: float) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Maximum-total-IOU one-to-one assignment over pairs with IOU >= gate.

    Returns (pairs, unmatched_rows, unmatched_cols) in row/column indices.
    Pairs below the gate contribute nothing to the objective, so dropping
    them afterwards leaves an optimal gated matching.  Exact ties resolve
    toward the lowest row index, then the lowest column index.
    """
    iou = np.asarray(iou, dtype=np.float64)
    n, m = iou.shape
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    weights = np.where(iou >= gate, iou, 0.0)
    # The bonus steers column-subset ties toward low columns; permutation
    # ties cancel it out and are handled by the swap pass below.
    order = np.arange(n * m, dtype=np.float64).reshape(n, m)
    tie = np.where(iou >= gate, _TIE_EPS * (1.0 - order / (n * m)), 0.0)
    rows, cols = linear_sum_assignment(weights + tie, maximize=True)
    pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols) if iou[r, c] >= gate)
    _canonicalize_ties(pairs, weights, iou, gate)
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return (pairs,
            [r for r in range(n) if r not in matched_r],
            [c for c in range(m) if c not in matched_c])


def _canonicalize_ties(pairs: list[tuple[int, int]], weights: np.ndarray,
                       iou: np.ndarray, gate: float) -> None:
    """Swap equal-total pair exchanges so low rows get low columns."""
    changed = True
    while changed:
        changed = False
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                (r1, c1), (r2, c2) = pairs[a], pairs[b]
                if c2 >= c1:
                    continue
                if iou[r1, c2] < gate or iou[r2, c1] < gate:
                    continue
                if weights[r1, c2] + weights[r2, c1] == weights[r1, c1] + weights[r2, c2]:
                    pairs[a], pairs[b] = (r1, c2), (r2, c1)
                    changed = True
        if changed:
            pairs.sort()


def associate(
    tracks: list[tuple[int, Box3D | Box2D]],
    dets: list[tuple[int, Box3D | Box2D]],
    gate: float,
    mode: str = "iou3d",
) -> Association:
    """Optimally match track boxes to detection boxes by IOU.

    Box types must match the mode: Box3D for "iou3d", Box2D for "iou2d".
    Ties are broken toward the lowest track_id, then the lowest det_index.
    """
    tracks = sorted(tracks, key=lambda t: t[0])
    dets = sorted(dets, key=lambda d: d[0])
    track_ids = [tid for tid, _ in tracks]
    track_boxes = [b for _, b in tracks]
    det_ids = [d for d, _ in dets]
    det_boxes = [b for _, b in dets]
    if mode == "iou3d":
        iou = iou3d_matrix(
            np.array([b.as_array() for b in track_boxes]).reshape(-1, 6),
            np.array([b.as_array() for b in det_boxes]).reshape(-1, 6),
        )
    elif mode == "iou2d":
        iou = iou2d_matrix(
            np.array([b.as_tuple() for b in track_boxes]).reshape(-1, 4),
            np.array([b.as_tuple() for b in det_boxes]).reshape(-1, 4),
        )
    else:
        raise ValidationError(f"unknown association mode {mode!r}")
    pairs, un_r, un_c = assign_by_iou(iou, gate)
    return Association(
        matches=tuple(sorted((track_ids[r], det_ids[c]) for r, c in pairs)),
        unmatched_tracks=tuple(track_ids[r] for r in un_r),
        unmatched_detections=tuple(det_ids[c] for c in un_c),
    )


# ---------------------------------------------------------------------------
# Trajectory prediction
# ---------------------------------------------------------------------------

def _linear_fit_extrapolate(frames: np.ndarray, values: np.ndarray, target: float) -> np.ndarray:
    """Least-squares line per column of `values`, evaluated at `target`."""
    if frames.size == 1:
        return values[0].copy()
    t = frames - frames.mean()
    denom = float(np.dot(t, t))
    mean = values.mean(axis=0)
    slope = (t @ (values - mean)) / denom
    return mean + slope * (target - frames.mean())


def predict(track: Track, window: int,
            target_frame: int | None = None) -> tuple[Box3D, Pose3D, Box2D | None]:
    """Constant-velocity extrapolation of a track, one frame past its end
    (or to `target_frame` when given).

    Fits a least-squares line per box corner and per joint coordinate over
    the up-to-`window` most recent observed states; a single observation
    extrapolates with zero velocity.
    """
    observed = track.observed_states()[-window:]
    if not observed:
        raise ValidationError("predict: track has no observed state")
    if target_frame is None:
        target_frame = track.last_state.frame_index + 1
    target = float(target_frame)
    frames = np.array([s.frame_index for s in observed], dtype=np.float64)
    ref_pose = observed[-1].pose3d

    box_vals = np.stack([s.box3d.as_array() for s in observed])
    joints_vals = np.stack([s.pose3d.joints[:, :3].reshape(-1) for s in observed])
    box = Box3D.from_array(_linear_fit_extrapolate(frames, box_vals, target))
    joints_xyz = _linear_fit_extrapolate(frames, joints_vals, target).reshape(-1, 3)
    joints = np.concatenate([joints_xyz, ref_pose.joints[:, 3:4]], axis=1)
    pose = Pose3D(joints=joints, root_index=ref_pose.root_index,
                  skeleton_id=ref_pose.skeleton_id)

    box2d = None
    if all(s.box2d is not None for s in observed):
        b2_vals = np.stack([np.array(s.box2d.as_tuple()) for s in observed])
        x0, y0, x1, y1 = _linear_fit_extrapolate(frames, b2_vals, target)
        if x0 < x1 and y0 < y1:
            box2d = Box2D(float(x0), float(y0), float(x1), float(y1))
        else:
            box2d = observed[-1].box2d
    return box, pose, box2d


Predictor = Callable[..., tuple[Box3D, Pose3D, Box2D | None]]
_PREDICTORS: dict[str, Callable[[dict], Predictor]] = {}


def register_predictor(name: str, factory: Callable[[dict], Predictor]) -> None:
    _PREDICTORS[name] = factory


def make_predictor(spec: PredictorSpec) -> Predictor:
    try:
        factory = _PREDICTORS[spec.name]
    except KeyError:
        raise ValidationError(f"unknown predictor {spec.name!r}") from None
    return factory(spec.parameters)


register_predictor("linear", lambda params: predict)


# ---------------------------------------------------------------------------
# Tracker
# ---------------------------------------------------------------------------

class Tracker:
    """Stateful frame-wise tracker; fold frames through :meth:`step`."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.live: list[Track] = []
        self.finished: list[Track] = []
        self.next_id = 0
        self.last_frame = -1
        self._predict = make_predictor(cfg.predictor)

    def step(self, frame_index: int, items: list[tuple[Detection, Box3D, Pose3D]]) -> None:
        if frame_index <= self.last_frame:
            raise SequencingError(
                f"frame {frame_index} after frame {self.last_frame}"
            )
        self.last_frame = frame_index
        cfg = self.cfg

        if cfg.association_mode == "iou3d":
            track_boxes = [(t.track_id, t.last_state.box3d) for t in self.live]
            det_boxes = [(i, box) for i, (_, box, _) in enumerate(items)]
        else:
            track_boxes = [(t.track_id, t.last_state.box2d) for t in self.live
                           if t.last_state.box2d is not None]
            det_boxes = [(i, det.box) for i, (det, _, _) in enumerate(items)]
        assoc = associate(track_boxes, det_boxes, cfg.iou_gate, cfg.association_mode)

        by_id = {t.track_id: t for t in self.live}
        matched_dets = set()
        matched_tracks = set()
        for track_id, det_index in assoc.matches:
            det, box3d, pose3d = items[det_index]
            track = by_id[track_id]
            track.states.append(TrackState(frame_index, OBSERVED, box3d, pose3d,
                                           box2d=det.box, detection=det))
            track.gap_run = 0
            matched_dets.add(det_index)
            matched_tracks.add(track_id)

        for track in self.live:
            if track.track_id in matched_tracks:
                continue
            if track.gap_run + 1 > cfg.max_gap:
                self._terminate(track)
                continue
            box3d, pose3d, box2d = self._predict(track, cfg.predictor_window,
                                                 target_frame=frame_index)
            track.states.append(TrackState(frame_index, PREDICTED, box3d, pose3d,
                                           box2d=box2d))
            track.gap_run += 1
        self.live = [t for t in self.live if not t.terminated]

        spawn = [i for i in range(len(items)) if i not in matched_dets
                 and items[i][0].score >= cfg.min_track_score]
        spawn.sort(key=lambda i: (-items[i][0].score, i))
        for det_index in spawn:
            det, box3d, pose3d = items[det_index]
            track = Track(track_id=self.next_id, birth_frame=frame_index)
            track.states.append(TrackState(frame_index, OBSERVED, box3d, pose3d,
                                           box2d=det.box, detection=det))
            self.next_id += 1
            self.live.append(track)

    def _terminate(self, track: Track) -> None:
        track.drop_trailing_predictions()
        track.terminated = True
        self.finished.append(track)

    def finalize(self) -> list[Track]:
        """Close all live tracks and return every track in id order."""
        for track in self.live:
            self._terminate(track)
        self.live = []
        return sorted(self.finished, key=lambda t: t.track_id)


def run_sequence(
    seq: SequenceInput,
    cfg: TrackerConfig,
    lifting: LiftingConfig | None = None,
) -> list[Track]:
    """Lift every detection and fold the tracker over the sequence."""
    lifting = lifting or LiftingConfig()
    lifter = make_lifter(lifting.lifter, lifting)
    tracker = Tracker(cfg)
    for frame in seq.frames:
        try:
            depth = frame.load()
            lifted = []
            for det in frame.detections:
                if (det.mask.width, det.mask.height) != (depth.width, depth.height):
                    raise ValidationError(
                        f"mask {det.mask.width}x{det.mask.height} does not match "
                        f"depth {depth.width}x{depth.height}"
                    )
                box3d = lift_box(det.box, depth, det.mask, seq.camera,
                                 min_thickness=lifting.min_thickness,
                                 percentile=lifting.depth_percentile)
                lifted.append((det, box3d, lifter(det, depth, seq.camera)))
            placed = place_relative([pose for _, _, pose in lifted])
            items = [(det, box, pose) for (det, box, _), pose in zip(lifted, placed)]
            tracker.step(frame.frame_index, items)
        except PoseTrackError as e:
            raise type(e)(f"frame {frame.frame_index}: {e}") from e
    return tracker.finalize()


# ---------------------------------------------------------------------------
# Tracks file IO (shared with the ground-truth format)
# ---------------------------------------------------------------------------

def _pose_to_list(pose: Pose3D) -> list:
    return pose.joints.tolist()


def _pose_from_list(rows: list, skeleton_id: str, root_index: int) -> Pose3D:
    return Pose3D(joints=np.asarray(rows, dtype=np.float64),
                  root_index=root_index, skeleton_id=skeleton_id)


def write_tracks(
    path: str | Path,
    tracks: list[Track],
    skeleton_id: str,
    fps: float,
    tracker_cfg: TrackerConfig | None = None,
    kind: str = "tracks",
) -> None:
    """Write tracks as JSON lines with a leading header record."""
    header: dict = {
        "kind": kind,
        "engine_version": __version__,
        "skeleton": skeleton_id,
        "fps": fps,
    }
    if tracker_cfg is not None:
        header["tracker"] = {
            "iou_gate": tracker_cfg.iou_gate,
            "max_gap": tracker_cfg.max_gap,
            "predictor_window": tracker_cfg.predictor_window,
            "association_mode": tracker_cfg.association_mode,
            "min_track_score": tracker_cfg.min_track_score,
            "predictor": tracker_cfg.predictor.name,
        }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"header": header}) + "\n")
        for track in tracks:
            obj = {
                "id": track.track_id,
                "birth": track.birth_frame,
                "states": [
                    {
                        "frame": s.frame_index,
                        "kind": s.kind,
                        "box3d": list(s.box3d.as_array()),
                        "pose3d": _pose_to_list(s.pose3d),
                    }
                    for s in track.states
                ],
            }
            f.write(json.dumps(obj) + "\n")


def read_tracks(path: str | Path) -> tuple[dict, list[Track]]:
    """Read a tracks (or ground-truth) file; returns (header, tracks)."""
    path = Path(path)
    header: dict = {}
    tracks: list[Track] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: invalid JSON ({e.msg})", line=lineno) from None
            if "header" in obj:
                header = obj["header"]
                continue
            try:
                skeleton_id = header.get("skeleton", "basic15")
                root_index = get_skeleton(skeleton_id).root_index
                track = Track(track_id=int(obj["id"]), birth_frame=int(obj["birth"]))
                for s in obj["states"]:
                    if s["kind"] not in (OBSERVED, PREDICTED):
                        raise ParseError(
                            f"{path}: unknown state kind {s['kind']!r}", line=lineno)
                    track.states.append(TrackState(
                        frame_index=int(s["frame"]),
                        kind=s["kind"],
                        box3d=Box3D.from_array(s["box3d"]),
                        pose3d=_pose_from_list(s["pose3d"], skeleton_id, root_index),
                    ))
            except (KeyError, TypeError) as e:
                raise ParseError(f"{path}: malformed track record ({e})", line=lineno) from None
            tracks.append(track)
    return header, tracks
