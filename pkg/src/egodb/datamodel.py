"""Shared domain types: poses, tracks, action chunks, episode metadata.

Everything here is an immutable value object. Arrays are coerced to the
canonical dtypes (float64 / int64) at construction and frozen, so instances
are safe to share between threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvariantViolationError

EMBODIMENTS = ("human", "robot")

# Column-group widths for ActionChunk layouts. A layout is a tuple of group
# kind names, columns ordered group by group. Quaternion groups are stored
# in (qx, qy, qz, qw) wire order.
LAYOUT_WIDTHS = {
    "position": 3,
    "rot_quat": 4,
    "rot_euler": 3,
    "gripper": 1,
}

QUAT_UNIT_TOL = 1e-6


def layout_dim(layout: Sequence[str]) -> int:
    """Total column count implied by a layout tuple."""
    try:
        return sum(LAYOUT_WIDTHS[kind] for kind in layout)
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown layout group kind: {exc.args[0]!r}") from None


def layout_slices(layout: Sequence[str]) -> list[tuple[str, slice]]:
    """Per-group (kind, column slice) pairs, in column order."""
    out = []
    col = 0
    for kind in layout:
        width = LAYOUT_WIDTHS.get(kind)
        if width is None:
            raise InvalidArgumentError(f"unknown layout group kind: {kind!r}")
        out.append((kind, slice(col, col + width)))
        col += width
    return out


def _frozen_array(values: Any, dtype: str, shape_hint: str = "") -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose6D:
    """A rigid transform: unit quaternion (w, x, y, z) plus translation in meters.

    The quaternion is renormalized at construction; a near-zero norm is
    rejected rather than silently scaled up.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64)
        if q.shape != (4,):
            raise InvalidArgumentError(f"rotation must be a wxyz quaternion, got shape {q.shape}")
        if t.shape != (3,):
            raise InvalidArgumentError(f"translation must be a 3-vector, got shape {t.shape}")
        norm = float(np.linalg.norm(q))
        if norm < 1e-12:
            raise InvalidArgumentError("quaternion norm is ~0; not a rotation")
        q = q / norm
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose6D":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def allclose(self, other: "Pose6D", atol: float = 1e-9) -> bool:
        """True when rotations agree up to quaternion sign and translations up to atol."""
        qd = min(
            float(np.abs(self.rotation - other.rotation).max()),
            float(np.abs(self.rotation + other.rotation).max()),
        )
        return qd <= atol and bool(np.allclose(self.translation, other.translation, atol=atol))


@dataclass(frozen=True)
class HandTrack:
    """Per-frame hand keypoints in the camera frame.

    keypoints has shape (frames, hands, 21, 3) in meters; timestamps_ns is
    strictly increasing.
    """

    timestamps_ns: np.ndarray
    keypoints: np.ndarray

    def __post_init__(self):
        ts = _frozen_array(self.timestamps_ns, "<i8")
        kp = _frozen_array(self.keypoints, "<f8")
        if ts.ndim != 1:
            raise InvariantViolationError("timestamps_ns must be 1-D")
        if kp.ndim != 4 or kp.shape[2] != 21 or kp.shape[3] != 3:
            raise InvariantViolationError(
                f"keypoints must have shape (frames, hands, 21, 3), got {kp.shape}"
            )
        if kp.shape[0] != ts.shape[0]:
            raise InvariantViolationError("keypoints frame count does not match timestamps")
        if ts.shape[0] >= 2 and not np.all(np.diff(ts) > 0):
            raise InvariantViolationError("timestamps_ns must be strictly increasing")
        object.__setattr__(self, "timestamps_ns", ts)
        object.__setattr__(self, "keypoints", kp)

    @property
    def num_frames(self) -> int:
        return int(self.timestamps_ns.shape[0])

    @property
    def num_hands(self) -> int:
        return int(self.keypoints.shape[1])


@dataclass(frozen=True)
class ActionChunk:
    """A fixed-length action sequence: values is (T, D) with a declared layout.

    The layout names the per-column semantics group by group (see
    LAYOUT_WIDTHS); D must equal the layout's total width and any rot_quat
    group must hold unit quaternions per row.
    """

    values: np.ndarray
    layout: tuple[str, ...]

    def __post_init__(self):
        vals = _frozen_array(self.values, "<f8")
        layout = tuple(self.layout)
        if vals.ndim != 2:
            raise InvariantViolationError(f"values must be 2-D (T, D), got shape {vals.shape}")
        expected = layout_dim(layout)
        if vals.shape[1] != expected:
            raise InvariantViolationError(
                f"layout implies D={expected} but values have D={vals.shape[1]}"
            )
        for kind, cols in layout_slices(layout):
            if kind == "rot_quat" and vals.shape[0] > 0:
                norms = np.linalg.norm(vals[:, cols], axis=1)
                if not np.all(np.abs(norms - 1.0) <= QUAT_UNIT_TOL):
                    worst = float(np.abs(norms - 1.0).max())
                    raise InvariantViolationError(
                        f"rot_quat columns {cols.start}:{cols.stop} are not unit "
                        f"quaternions (max norm error {worst:.3g})"
                    )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "layout", layout)

    @property
    def chunk_length(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


# EpisodeRecord fields a data collector supplies at upload time. Everything
# else is either derived (episode_hash) or updated by automated processing.
USER_SETTABLE_FIELDS = (
    "operator",
    "lab",
    "task",
    "scene",
    "embodiment",
    "robot_name",
    "task_description",
    "objects",
    "is_eval",
)

IMMUTABLE_FIELDS = ("episode_hash", "lab", "task", "embodiment")


@dataclass(frozen=True)
class EpisodeRecord:
    """One registry row of episode metadata."""

    episode_hash: str
    operator: str
    lab: str
    task: str
    scene: str
    embodiment: str
    robot_name: Optional[str] = None
    task_description: str = ""
    objects: tuple[str, ...] = ()
    num_frames: Optional[int] = None
    processed_path: Optional[str] = None
    mp4_path: Optional[str] = None
    processing_error: Optional[str] = None
    is_deleted: bool = False
    is_eval: bool = False
    eval_score: Optional[float] = None
    eval_success: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def to_dict(self) -> dict:
        return {
            "episode_hash": self.episode_hash,
            "operator": self.operator,
            "lab": self.lab,
            "task": self.task,
            "scene": self.scene,
            "embodiment": self.embodiment,
            "robot_name": self.robot_name,
            "task_description": self.task_description,
            "objects": list(self.objects),
            "num_frames": self.num_frames,
            "processed_path": self.processed_path,
            "mp4_path": self.mp4_path,
            "processing_error": self.processing_error,
            "is_deleted": self.is_deleted,
            "is_eval": self.is_eval,
            "eval_score": self.eval_score,
            "eval_success": self.eval_success,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EpisodeRecord":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        if "objects" in kwargs and kwargs["objects"] is not None:
            kwargs["objects"] = tuple(kwargs["objects"])
        return cls(**kwargs)

    def user_settable_view(self) -> dict:
        """The subset compared when deciding re-registration idempotency."""
        d = self.to_dict()
        return {k: d[k] for k in USER_SETTABLE_FIELDS}


def validate_metadata(record: EpisodeRecord) -> list[str]:
    """Check every EpisodeRecord invariant; returns violation messages (empty = ok).

    Pure and total: never raises on bad data, the verdict is the return value.
    """
    violations = []
    if not isinstance(record.episode_hash, str) or not record.episode_hash:
        violations.append("empty episode_hash")
    for name in ("operator", "lab", "task", "scene"):
        value = getattr(record, name)
        if not isinstance(value, str) or not value:
            violations.append(f"empty {name}")
    if record.embodiment not in EMBODIMENTS:
        violations.append(f"embodiment must be one of {EMBODIMENTS}, got {record.embodiment!r}")
    if record.robot_name is not None and record.embodiment != "robot":
        violations.append("robot_name without robot embodiment")
    if not record.is_eval:
        if record.eval_score is not None:
            violations.append("eval_score without is_eval")
        if record.eval_success is not None:
            violations.append("eval_success without is_eval")
    if record.num_frames is not None and record.num_frames < 0:
        violations.append("num_frames must be non-negative")
    if record.processed_path is not None and record.processing_error is not None:
        violations.append("processed_path and processing_error both set")
    return violations


def make_episode_hash(utc_timestamp_ns: int, uploader_nonce: str) -> str:
    """Mint an episode id from the upload UTC timestamp plus an uploader nonce.

    SHA-256 over "<nanoseconds>|<nonce>"; the nonce keeps simultaneous uploads
    from different sites collision-free.
    """
    ts = int(utc_timestamp_ns)
    if ts <= 0:
        raise InvalidArgumentError(f"utc_timestamp_ns must be positive, got {ts}")
    digest = hashlib.sha256(f"{ts}|{uploader_nonce}".encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class CanonicalEpisode:
    """The processed, training-ready form of one episode.

    All per-frame tracks share timestamps_ns. Human episodes carry hand
    keypoints (frames, hands, 21, 3); robot episodes carry end-effector pose
    tracks (frames, arms, ·) plus a per-arm gripper scalar. action_chunks is
    (frames, chunk_length, action_dim): one chunk anchored at every frame.
    """

    episode_hash: str
    embodiment: str
    fps: float
    chunk_length: int
    action_dim: int
    action_layout: tuple[str, ...]
    timestamps_ns: np.ndarray
    device_rotations: np.ndarray
    device_translations: np.ndarray
    action_chunks: np.ndarray
    hands: Optional[np.ndarray] = None
    ee_rotations: Optional[np.ndarray] = None
    ee_translations: Optional[np.ndarray] = None
    gripper: Optional[np.ndarray] = None
    raw_digest: str = ""
    processing_version: str = ""

    def __post_init__(self):
        object.__setattr__(self, "action_layout", tuple(self.action_layout))
        object.__setattr__(self, "timestamps_ns", _frozen_array(self.timestamps_ns, "<i8"))
        for name in ("device_rotations", "device_translations", "action_chunks",
                     "hands", "ee_rotations", "ee_translations", "gripper"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen_array(value, "<f8"))
        self.validate()

    @property
    def num_frames(self) -> int:
        return int(self.timestamps_ns.shape[0])

    def validate(self) -> None:
        """Raise InvariantViolationError unless every canonical invariant holds."""
        if self.embodiment not in EMBODIMENTS:
            raise InvariantViolationError(f"unknown embodiment {self.embodiment!r}")
        if self.fps <= 0:
            raise InvariantViolationError("fps must be positive")
        n = self.num_frames
        ts = self.timestamps_ns
        if n >= 2 and not np.all(np.diff(ts) > 0):
            raise InvariantViolationError("timestamps_ns must be strictly increasing")
        if self.device_rotations.shape != (n, 4):
            raise InvariantViolationError(
                f"device_rotations must be ({n}, 4), got {self.device_rotations.shape}"
            )
        if self.device_translations.shape != (n, 3):
            raise InvariantViolationError(
                f"device_translations must be ({n}, 3), got {self.device_translations.shape}"
            )
        norms = np.linalg.norm(self.device_rotations, axis=1)
        if n and not np.all(np.abs(norms - 1.0) <= QUAT_UNIT_TOL):
            raise InvariantViolationError("device rotations must be unit quaternions")
        if self.action_dim != layout_dim(self.action_layout):
            raise InvariantViolationError("action_dim does not match action_layout")
        if self.action_chunks.shape != (n, self.chunk_length, self.action_dim):
            raise InvariantViolationError(
                f"action_chunks must be ({n}, {self.chunk_length}, {self.action_dim}), "
                f"got {self.action_chunks.shape}"
            )
        if self.embodiment == "human":
            if self.hands is None:
                raise InvariantViolationError("human episode requires a hands track")
            if self.hands.ndim != 4 or self.hands.shape[0] != n or self.hands.shape[2:] != (21, 3):
                raise InvariantViolationError(
                    f"hands must be ({n}, hands, 21, 3), got {self.hands.shape}"
                )
            for name in ("ee_rotations", "ee_translations", "gripper"):
                if getattr(self, name) is not None:
                    raise InvariantViolationError(f"human episode must not carry {name}")
        else:
            if self.hands is not None:
                raise InvariantViolationError("robot episode must not carry a hands track")
            if self.ee_rotations is None or self.ee_translations is None or self.gripper is None:
                raise InvariantViolationError(
                    "robot episode requires ee_rotations, ee_translations and gripper tracks"
                )
            arms = self.ee_rotations.shape[1] if self.ee_rotations.ndim == 3 else -1
            if self.ee_rotations.shape != (n, arms, 4):
                raise InvariantViolationError(
                    f"ee_rotations must be ({n}, arms, 4), got {self.ee_rotations.shape}"
                )
            if self.ee_translations.shape != (n, arms, 3):
                raise InvariantViolationError(
                    f"ee_translations must be ({n}, {arms}, 3), got {self.ee_translations.shape}"
                )
            if self.gripper.shape != (n, arms):
                raise InvariantViolationError(
                    f"gripper must be ({n}, {arms}), got {self.gripper.shape}"
                )
            enorms = np.linalg.norm(self.ee_rotations, axis=2)
            if n and not np.all(np.abs(enorms - 1.0) <= QUAT_UNIT_TOL):
                raise InvariantViolationError("ee rotations must be unit quaternions")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CanonicalEpisode):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None:
                    if (a is None) != (b is None):
                        return False
                elif a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True
