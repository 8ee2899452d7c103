"""Shared fixtures and independent oracles used across the test suite.

The oracles here deliberately avoid the library's own code paths: rigid
transforms go through explicit 4x4 homogeneous matrices and quantiles go
through sorted order statistics, so agreement is evidence rather than
tautology.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from egodb.datamodel import EpisodeRecord, Pose6D


# ---------------------------------------------------------------------------
# homogeneous-matrix oracle


def quat_to_matrix_oracle(q) -> np.ndarray:
    """Rotation matrix from a unit wxyz quaternion, written in the w^2 form."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def pose_to_hmat(pose: Pose6D) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix_oracle(pose.rotation)
    m[:3, 3] = pose.translation
    return m


def hmat_apply(m: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = pts @ m[:3, :3].T + m[:3, 3]
    return out[0] if np.asarray(points).ndim == 1 else out


def random_pose(rng: np.random.Generator) -> Pose6D:
    return Pose6D(rng.standard_normal(4), rng.standard_normal(3))


def rot_z(angle_rad: float) -> Pose6D:
    return Pose6D(np.array([np.cos(angle_rad / 2), 0.0, 0.0, np.sin(angle_rad / 2)]), np.zeros(3))


# ---------------------------------------------------------------------------
# quantile oracle


def quantile_oracle(column: np.ndarray, q: float) -> float:
    """Linear interpolation between the closest order statistics."""
    s = np.sort(np.asarray(column, dtype=np.float64))
    pos = q * (len(s) - 1)
    lo, hi = int(np.floor(pos)), int(np.ceil(pos))
    frac = pos - lo
    return float(s[lo] * (1.0 - frac) + s[hi] * frac)


# ---------------------------------------------------------------------------
# record + fixture builders


def make_record(episode_hash: str = "a" * 64, **overrides) -> EpisodeRecord:
    base = dict(
        episode_hash=episode_hash,
        operator="op-1",
        lab="lab-a",
        task="fold-clothes",
        scene="kitchen",
        embodiment="human",
    )
    base.update(overrides)
    return EpisodeRecord(**base)


def make_human_fixture_doc(
    rng: np.random.Generator,
    frames: int = 60,
    fps: float = 30.0,
    hands: int = 2,
    stationary: bool = False,
    device_poses: list[Pose6D] | None = None,
) -> dict:
    if device_poses is not None:
        rot = np.stack([p.rotation for p in device_poses])
        trans = np.stack([p.translation for p in device_poses])
    elif stationary:
        pose = random_pose(rng)
        rot = np.tile(pose.rotation, (frames, 1))
        trans = np.tile(pose.translation, (frames, 1))
    else:
        rot = np.stack([random_pose(rng).rotation for _ in range(frames)])
        trans = np.cumsum(rng.standard_normal((frames, 3)) * 0.01, axis=0)
    keypoints = rng.standard_normal((frames, hands, 21, 3)) * 0.2
    return {
        "format": "synthetic/1",
        "embodiment": "human",
        "fps": fps,
        "device_rotations": rot.tolist(),
        "device_translations": trans.tolist(),
        "hands": keypoints.tolist(),
    }


def make_robot_fixture_doc(
    rng: np.random.Generator,
    frames: int = 90,
    fps: float = 30.0,
    arms: int = 2,
    rotation_layout: str = "quaternion",
    static: bool = False,
) -> dict:
    device = random_pose(rng)
    ee_rot = np.empty((frames, arms, 4))
    ee_trans = rng.standard_normal((frames, arms, 3)) * 0.1
    for arm in range(arms):
        if static:
            q = random_pose(rng).rotation
            ee_rot[:, arm] = np.tile(q, (frames, 1))
            ee_trans[:, arm] = np.tile(ee_trans[0, arm], (frames, 1))
        else:
            for f in range(frames):
                ee_rot[f, arm] = random_pose(rng).rotation
    gripper = rng.random((frames, arms))
    if static:
        gripper = np.tile(gripper[0], (frames, 1))
    return {
        "format": "synthetic/1",
        "embodiment": "robot",
        "fps": fps,
        "device_rotations": np.tile(device.rotation, (frames, 1)).tolist(),
        "device_translations": np.tile(device.translation, (frames, 1)).tolist(),
        "ee_rotations": ee_rot.tolist(),
        "ee_translations": ee_trans.tolist(),
        "gripper": gripper.tolist(),
        "rotation_layout": rotation_layout,
    }


def fixture_bytes(doc: dict) -> bytes:
    return json.dumps(doc).encode("utf-8")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260808)
