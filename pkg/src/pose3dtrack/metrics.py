"""Tracking and pose-accuracy evaluation.

MOTA follows the CLEAR-MOT accumulation: per frame, ground-truth people are
matched to predicted poses by root-joint distance (identity persistence
first, then optimal assignment of the remainder); unmatched ground truth
counts as a miss, unmatched predictions as false positives, and a matched
person whose track id changed since its last matched frame as an identity
switch.  Pose accuracy is the percentage of root-aligned joints within a
threshold, plus its mean over a fixed threshold grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EvaluationError
from .ingest import get_skeleton
from .pose3d import Pose3D
from .tracking import OBSERVED, Track

# Threshold grid for the area-under-curve score: 5 mm steps up to 150 mm.
AUC_THRESHOLDS = tuple(0.005 * k for k in range(1, 31))

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame ground-truth poses keyed by frame index."""

    frames: dict[int, list[tuple[int, Pose3D]]]
    skeleton_id: str = "basic15"

    def __post_init__(self):
        for frame, entries in self.frames.items():
            ids = [gt_id for gt_id, _ in entries]
            if len(ids) != len(set(ids)):
                raise EvaluationError(f"frame {frame}: duplicate gt_id")

    @property
    def frame_indices(self) -> list[int]:
        return sorted(self.frames)

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.frames.values())


def ground_truth_from_tracks(tracks: list[Track], skeleton_id: str = "basic15") -> GroundTruth:
    """Reinterpret track records as ground truth ("id" becomes gt_id)."""
    frames: dict[int, list[tuple[int, Pose3D]]] = {}
    for track in tracks:
        for state in track.states:
            frames.setdefault(state.frame_index, []).append((track.track_id, state.pose3d))
    for entries in frames.values():
        entries.sort(key=lambda e: e[0])
    return GroundTruth(frames=frames, skeleton_id=skeleton_id)


@dataclass
class MotReport:
    mota: float
    misses: int
    false_positives: int
    id_switches: int
    gt_total: int
    radius: float
    per_frame: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mota": self.mota,
            "misses": self.misses,
            "false_positives": self.false_positives,
            "id_switches": self.id_switches,
            "gt_total": self.gt_total,
            "radius": self.radius,
            "per_frame": self.per_frame,
        }


@dataclass
class PckReport:
    pck_rel: float
    auc_rel: float | None
    tau: float
    joints_total: int
    joints_correct: int
    per_joint: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "pck_rel": self.pck_rel,
            "auc_rel": self.auc_rel,
            "tau": self.tau,
            "joints_total": self.joints_total,
            "joints_correct": self.joints_correct,
            "per_joint": self.per_joint,
        }


# ---------------------------------------------------------------------------
# Frame matching
# ---------------------------------------------------------------------------

def match_frame(
    gts: list[tuple[int, Pose3D]],
    preds: list[tuple[int, Pose3D]],
    radius: float,
) -> list[tuple[int, int]]:
    """Optimal one-to-one (gt_id, track_id) matching by root distance.

    Maximizes the number of pairs within `radius`, minimizing total root
    distance among them; ties break toward the lowest gt_id.
    """
    if radius <= 0.0:
        raise EvaluationError("match radius must be > 0")
    if not gts or not preds:
        return []
    gts = sorted(gts, key=lambda g: g[0])
    g_roots = np.stack([pose.root for _, pose in gts])
    p_roots = np.stack([pose.root for _, pose in preds])
    dist = np.linalg.norm(g_roots[:, None, :] - p_roots[None, :, :], axis=2)
    n, m = dist.shape
    big = max(1e9, radius * (n + m) * 10.0)
    order = np.arange(n * m, dtype=np.float64).reshape(n, m)
    cost = np.where(dist <= radius, dist + _TIE_EPS * order / (n * m), big)
    rows, cols = linear_sum_assignment(cost)
    return [(gts[r][0], preds[c][0]) for r, c in zip(rows, cols)
            if dist[r, c] <= radius]


def _predictions_by_frame(tracks: list[Track]) -> dict[int, list[tuple[int, Pose3D]]]:
    frames: dict[int, list[tuple[int, Pose3D]]] = {}
    for track in tracks:
        for state in track.states:
            frames.setdefault(state.frame_index, []).append((track.track_id, state.pose3d))
    for entries in frames.values():
        entries.sort(key=lambda e: e[0])
    return frames


# ---------------------------------------------------------------------------
# MOTA
# ---------------------------------------------------------------------------

def mota(gt: GroundTruth, tracks: list[Track], radius: float = 0.5) -> MotReport:
    """CLEAR-MOT accumulation over all ground-truth frames."""
    if gt.total == 0:
        raise EvaluationError("MOTA is undefined for empty ground truth")
    preds_by_frame = _predictions_by_frame(tracks)
    last_matched: dict[int, int] = {}
    misses = false_positives = id_switches = 0
    per_frame: list[dict] = []

    for frame in gt.frame_indices:
        gts = sorted(gt.frames[frame], key=lambda g: g[0])
        preds = preds_by_frame.get(frame, [])
        pred_by_id = {tid: pose for tid, pose in preds}

        matches: dict[int, int] = {}
        taken: set[int] = set()
        # Identity persistence: a person keeps its previous track while the
        # track is still within radius; only the remainder is re-optimized.
        for gt_id, pose in gts:
            prev = last_matched.get(gt_id)
            if prev is None or prev in taken or prev not in pred_by_id:
                continue
            d = float(np.linalg.norm(pose.root - pred_by_id[prev].root))
            if d <= radius:
                matches[gt_id] = prev
                taken.add(prev)
        rest_gts = [(gt_id, pose) for gt_id, pose in gts if gt_id not in matches]
        rest_preds = [(tid, pose) for tid, pose in preds if tid not in taken]
        for gt_id, tid in match_frame(rest_gts, rest_preds, radius):
            matches[gt_id] = tid
            taken.add(tid)

        frame_switches = 0
        for gt_id, tid in matches.items():
            prev = last_matched.get(gt_id)
            if prev is not None and prev != tid:
                frame_switches += 1
            last_matched[gt_id] = tid
        frame_misses = len(gts) - len(matches)
        frame_fp = len(preds) - len(taken)
        misses += frame_misses
        false_positives += frame_fp
        id_switches += frame_switches
        per_frame.append({
            "frame": frame,
            "gt": len(gts),
            "matches": len(matches),
            "misses": frame_misses,
            "false_positives": frame_fp,
            "id_switches": frame_switches,
        })

    # Predictions in frames with no ground truth entry are false positives too.
    for frame, preds in preds_by_frame.items():
        if frame not in gt.frames:
            false_positives += len(preds)
            per_frame.append({
                "frame": frame, "gt": 0, "matches": 0, "misses": 0,
                "false_positives": len(preds), "id_switches": 0,
            })
    per_frame.sort(key=lambda r: r["frame"])

    value = 1.0 - (misses + false_positives + id_switches) / gt.total
    return MotReport(
        mota=value,
        misses=misses,
        false_positives=false_positives,
        id_switches=id_switches,
        gt_total=gt.total,
        radius=radius,
        per_frame=per_frame,
    )


# ---------------------------------------------------------------------------
# 3D PCK
# ---------------------------------------------------------------------------

def _root_aligned_errors(gt_pose: Pose3D, pred_pose: Pose3D) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint Euclidean error after translating the prediction's root onto
    the ground-truth root; returns (errors, gt_valid mask)."""
    if gt_pose.skeleton_id != pred_pose.skeleton_id:
        raise EvaluationError(
            f"skeleton mismatch: {gt_pose.skeleton_id!r} vs {pred_pose.skeleton_id!r}"
        )
    shift = gt_pose.root - pred_pose.root
    aligned = pred_pose.joints[:, :3] + shift
    errors = np.linalg.norm(aligned - gt_pose.joints[:, :3], axis=1)
    valid = gt_pose.joints[:, 3] > 0.0
    return errors, valid


def pck3d_rel(
    pairs: list[tuple[Pose3D, Pose3D]],
    tau: float = 0.15,
    with_auc: bool = True,
) -> PckReport:
    """Root-aligned percentage of correct keypoints over matched pose pairs.

    A joint is correct iff its error is <= tau (boundary inclusive); only
    joints valid in the ground truth are counted.
    """
    if tau <= 0.0:
        raise EvaluationError("tau must be > 0")
    if not pairs:
        raise EvaluationError("no matched pose pairs to score")
    skel = get_skeleton(pairs[0][0].skeleton_id)
    all_errors = []
    all_valid = []
    for gt_pose, pred_pose in pairs:
        errors, valid = _root_aligned_errors(gt_pose, pred_pose)
        all_errors.append(errors)
        all_valid.append(valid)
    errors = np.stack(all_errors)  # (pairs, joints)
    valid = np.stack(all_valid)
    total = int(valid.sum())
    if total == 0:
        raise EvaluationError("ground truth has no valid joints")
    correct = int(((errors <= tau) & valid).sum())

    per_joint: dict[str, float] = {}
    for j, name in enumerate(skel.joint_names):
        jt = int(valid[:, j].sum())
        if jt:
            per_joint[name] = 100.0 * int(((errors[:, j] <= tau) & valid[:, j]).sum()) / jt
    auc = None
    if with_auc:
        auc = float(np.mean([
            100.0 * ((errors <= t) & valid).sum() / total for t in AUC_THRESHOLDS
        ]))
    return PckReport(
        pck_rel=100.0 * correct / total,
        auc_rel=auc,
        tau=tau,
        joints_total=total,
        joints_correct=correct,
        per_joint=per_joint,
    )


def auc_rel(pairs: list[tuple[Pose3D, Pose3D]]) -> float:
    """Mean of pck3d_rel over the fixed 5 mm threshold grid up to 150 mm."""
    return float(np.mean([
        pck3d_rel(pairs, tau=t, with_auc=False).pck_rel for t in AUC_THRESHOLDS
    ]))


def matched_pose_pairs(
    gt: GroundTruth,
    tracks: list[Track],
    radius: float = 0.5,
    observed_only: bool = False,
) -> list[tuple[Pose3D, Pose3D]]:
    """Frame-wise root-distance matching, returning (gt, prediction) pairs."""
    preds_by_frame: dict[int, list[tuple[int, Pose3D]]] = {}
    for track in tracks:
        for state in track.states:
            if observed_only and state.kind != OBSERVED:
                continue
            preds_by_frame.setdefault(state.frame_index, []).append(
                (track.track_id, state.pose3d))
    pairs: list[tuple[Pose3D, Pose3D]] = []
    for frame in gt.frame_indices:
        gts = sorted(gt.frames[frame], key=lambda g: g[0])
        preds = sorted(preds_by_frame.get(frame, []), key=lambda p: p[0])
        gt_by_id = dict(gts)
        pred_by_id = dict(preds)
        for gt_id, tid in match_frame(gts, preds, radius):
            pairs.append((gt_by_id[gt_id], pred_by_id[tid]))
    return pairs
