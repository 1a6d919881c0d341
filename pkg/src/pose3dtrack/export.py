"""Renderer-agnostic animation scene export.

A scene document carries everything a downstream renderer needs to animate
the tracked people: per-actor, per-frame joint positions in meters with an
observed/predicted flag, plus enough metadata to interpret them.  The
format is a single JSON document and round-trips losslessly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .ingest import get_skeleton
from .tracking import OBSERVED, PREDICTED, Track


@dataclass(frozen=True)
class ActorSample:
    frame: int
    state: str  # "observed" | "predicted"
    joints: np.ndarray  # (J, 3) float64


@dataclass(frozen=True)
class Actor:
    actor_id: int
    birth_frame: int
    samples: tuple[ActorSample, ...]


@dataclass(frozen=True)
class SceneDocument:
    fps: float
    skeleton_id: str
    engine_version: str
    actors: tuple[Actor, ...]
    units: str = "meters"


_STATE_NAMES = {OBSERVED: "observed", PREDICTED: "predicted"}


def export_scene(tracks: list[Track], fps: float, skeleton_id: str) -> SceneDocument:
    """Flatten finalized tracks into a scene document."""
    joint_count = get_skeleton(skeleton_id).joint_count
    actors = []
    for track in sorted(tracks, key=lambda t: t.track_id):
        samples = []
        for state in track.states:
            if state.pose3d.joints.shape[0] != joint_count:
                raise ValidationError(
                    f"track {track.track_id}: pose has "
                    f"{state.pose3d.joints.shape[0]} joints, skeleton "
                    f"{skeleton_id!r} expects {joint_count}"
                )
            samples.append(ActorSample(
                frame=state.frame_index,
                state=_STATE_NAMES[state.kind],
                joints=state.pose3d.joints[:, :3].copy(),
            ))
        actors.append(Actor(actor_id=track.track_id,
                            birth_frame=track.birth_frame,
                            samples=tuple(samples)))
    return SceneDocument(fps=fps, skeleton_id=skeleton_id,
                         engine_version=__version__, actors=tuple(actors))


def scene_to_dict(doc: SceneDocument) -> dict:
    return {
        "metadata": {
            "fps": doc.fps,
            "skeleton": doc.skeleton_id,
            "units": doc.units,
            "engine_version": doc.engine_version,
        },
        "actors": [
            {
                "id": actor.actor_id,
                "birth": actor.birth_frame,
                "samples": [
                    {"frame": s.frame, "state": s.state, "joints": s.joints.tolist()}
                    for s in actor.samples
                ],
            }
            for actor in doc.actors
        ],
    }


def scene_from_dict(obj: dict) -> SceneDocument:
    meta = obj["metadata"]
    actors = tuple(
        Actor(
            actor_id=int(a["id"]),
            birth_frame=int(a["birth"]),
            samples=tuple(
                ActorSample(
                    frame=int(s["frame"]),
                    state=s["state"],
                    joints=np.asarray(s["joints"], dtype=np.float64),
                )
                for s in a["samples"]
            ),
        )
        for a in obj["actors"]
    )
    return SceneDocument(
        fps=float(meta["fps"]),
        skeleton_id=meta["skeleton"],
        engine_version=meta["engine_version"],
        units=meta.get("units", "meters"),
        actors=actors,
    )


def write_scene(path: str | Path, doc: SceneDocument) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene_to_dict(doc), f, indent=2)
        f.write("\n")


def read_scene(path: str | Path) -> SceneDocument:
    with open(path, "r", encoding="utf-8") as f:
        return scene_from_dict(json.load(f))
