"""Cross-embodiment alignment math.

SE(3) primitives on (w, x, y, z) quaternions, device-frame action
construction, camera-frame projection, window resampling with linear + SLERP
interpolation, robust quantile normalization, and the offline metrics. All
functions are pure and operate on immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import ActionChunk, Pose6D, layout_dim, layout_slices
from .errors import InsufficientDataError, InvalidArgumentError

# Nearly parallel quaternions fall back to normalized lerp: sin(theta) ~ 0.
SLERP_LERP_THRESHOLD = 1e-6


# ---------------------------------------------------------------------------
# quaternion primitives (w, x, y, z), vectorized over leading axes


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by unit quaternions q (..., 4).

    Uses v' = v + 2 w (u x v) + 2 u x (u x v) with u the vector part.
    """
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (..., 3, 3) of a unit quaternion."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def euler_zyx_to_quat(euler: np.ndarray) -> np.ndarray:
    """Quaternion of intrinsic Z-Y-X (yaw, pitch, roll) angles, (..., 3) -> (..., 4)."""
    e = np.asarray(euler, dtype=np.float64)
    half_yaw, half_pitch, half_roll = e[..., 0] / 2, e[..., 1] / 2, e[..., 2] / 2
    zeros = np.zeros_like(half_yaw)
    qz = np.stack([np.cos(half_yaw), zeros, zeros, np.sin(half_yaw)], axis=-1)
    qy = np.stack([np.cos(half_pitch), zeros, np.sin(half_pitch), zeros], axis=-1)
    qx = np.stack([np.cos(half_roll), np.sin(half_roll), zeros, zeros], axis=-1)
    return quat_mul(quat_mul(qz, qy), qx)


def quat_to_euler_zyx(q: np.ndarray) -> np.ndarray:
    """Intrinsic Z-Y-X (yaw, pitch, roll) angles of a unit quaternion, (..., 4) -> (..., 3).

    At the pitch singularity (|cos pitch| ~ 0) roll is pinned to 0 and yaw
    absorbs the remaining rotation.
    """
    r = quat_to_matrix(quat_normalize(q))
    sin_pitch = np.clip(-r[..., 2, 0], -1.0, 1.0)
    pitch = np.arcsin(sin_pitch)
    yaw = np.arctan2(r[..., 1, 0], r[..., 0, 0])
    roll = np.arctan2(r[..., 2, 1], r[..., 2, 2])
    gimbal = np.abs(np.abs(sin_pitch) - 1.0) < 1e-12
    if np.any(gimbal):
        yaw_g = np.arctan2(-r[..., 0, 1], r[..., 1, 1])
        yaw = np.where(gimbal, yaw_g, yaw)
        roll = np.where(gimbal, 0.0, roll)
    return np.stack([yaw, pitch, roll], axis=-1)


# ---------------------------------------------------------------------------
# SE(3) operations


def pose_compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """Composition a∘b: apply b first, then a. Result quaternion is renormalized."""
    rotation = quat_mul(a.rotation, b.rotation)
    translation = a.translation + quat_rotate(a.rotation, b.translation)
    return Pose6D(rotation, translation)


def pose_inverse(a: Pose6D) -> Pose6D:
    """The rigid transform undoing a: compose(a, pose_inverse(a)) is identity."""
    q_inv = quat_conjugate(a.rotation)
    return Pose6D(q_inv, -quat_rotate(q_inv, a.translation))


def pose_apply(pose: Pose6D, points: np.ndarray) -> np.ndarray:
    """Map points (..., 3) through the rigid transform."""
    return quat_rotate(pose.rotation, points) + pose.translation


# ---------------------------------------------------------------------------
# interpolation


def _slerp_batch(q0: np.ndarray, q1: np.ndarray, t: np.ndarray) -> np.ndarray:
    """SLERP of row-aligned quaternion pairs along the shorter arc.

    q0, q1: (N, 4) unit quaternions; t: (N,) in [0, 1]. Pairs with
    |dot| > 1 - SLERP_LERP_THRESHOLD use normalized lerp to avoid the
    sin(theta) -> 0 division.
    """
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    t = np.asarray(t, dtype=np.float64)[:, None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)

    near = dot > 1.0 - SLERP_LERP_THRESHOLD
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    # Guard the denominator on near-parallel rows; their output is replaced below.
    safe_sin = np.where(near, 1.0, sin_theta)
    w0 = np.where(near, 1.0 - t, np.sin((1.0 - t) * theta) / safe_sin)
    w1 = np.where(near, t, np.sin(t * theta) / safe_sin)
    return quat_normalize(w0 * q0 + w1 * q1)


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical linear interpolation between two unit quaternions.

    Follows the geodesic along the shorter arc (q1 is sign-flipped when
    dot(q0, q1) < 0); the result has unit norm.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidArgumentError(f"t must lie in [0, 1], got {t}")
    out = _slerp_batch(
        np.asarray(q0, dtype=np.float64)[None, :],
        np.asarray(q1, dtype=np.float64)[None, :],
        np.array([t]),
    )
    return out[0]


# ---------------------------------------------------------------------------
# action construction


def build_human_action_chunk(
    device_track: Sequence[Pose6D],
    hand_points: np.ndarray,
) -> ActionChunk:
    """Express future hand points in the anchor frame's device pose.

    device_track is [T_t, ..., T_{t+k}] and hand_points holds the matching
    per-frame point sets, each point in its own frame's device coordinates.
    Row i (i = 1..k) is the frame t+i point set mapped through
    inverse(T_t) ∘ T_{t+i}, flattened; there is no row for i = 0.
    """
    points = np.asarray(hand_points, dtype=np.float64)
    if points.ndim == 2:
        points = points[:, None, :]
    if points.ndim != 3 or points.shape[-1] != 3:
        raise InvalidArgumentError(
            f"hand_points must have shape (k+1, points, 3), got {np.shape(hand_points)}"
        )
    if len(device_track) != points.shape[0]:
        raise InvalidArgumentError(
            f"device_track has {len(device_track)} poses but hand_points has "
            f"{points.shape[0]} frames"
        )
    k = len(device_track) - 1
    if k < 1:
        raise InvalidArgumentError("need at least one future frame (k >= 1)")

    anchor_inv = pose_inverse(device_track[0])
    num_points = points.shape[1]
    rows = np.empty((k, 3 * num_points), dtype=np.float64)
    for i in range(1, k + 1):
        relative = pose_compose(anchor_inv, device_track[i])
        rows[i - 1] = pose_apply(relative, points[i]).reshape(-1)
    return ActionChunk(rows, ("position",) * num_points)


def camera_frame_action(
    ee_pose_base: Pose6D,
    extrinsics_base_to_camera: Pose6D,
    layout: str,
    gripper: float,
) -> ActionChunk:
    """One robot action row: the end-effector pose expressed in the camera frame.

    layout "euler" serializes (x, y, z, yaw, pitch, roll, grip); layout
    "quaternion" serializes (x, y, z, qx, qy, qz, qw, grip).
    """
    cam_pose = pose_compose(extrinsics_base_to_camera, ee_pose_base)
    if layout == "euler":
        angles = quat_to_euler_zyx(cam_pose.rotation)
        row = np.concatenate([cam_pose.translation, angles, [float(gripper)]])
        return ActionChunk(row[None, :], ("position", "rot_euler", "gripper"))
    if layout == "quaternion":
        w, x, y, z = cam_pose.rotation
        row = np.concatenate([cam_pose.translation, [x, y, z, w], [float(gripper)]])
        return ActionChunk(row[None, :], ("position", "rot_quat", "gripper"))
    raise InvalidArgumentError(f"layout must be 'euler' or 'quaternion', got {layout!r}")


# ---------------------------------------------------------------------------
# resampling


@dataclass(frozen=True)
class WindowSpec:
    """A resampling request: a forward window in seconds and the output length."""

    window_seconds: float
    target_length: int

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise InvalidArgumentError(f"window_seconds must be > 0, got {self.window_seconds}")
        if self.target_length < 2:
            raise InvalidArgumentError(f"target_length must be >= 2, got {self.target_length}")


@dataclass(frozen=True)
class TimedTrack:
    """A timestamped value sequence with a declared column layout."""

    timestamps_s: np.ndarray
    values: np.ndarray
    layout: tuple[str, ...]

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps_s, dtype=np.float64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if ts.ndim != 1 or vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise InvalidArgumentError(
                f"timestamps (N,) and values (N, D) required, got {ts.shape} and {vals.shape}"
            )
        if vals.shape[1] != layout_dim(self.layout):
            raise InvalidArgumentError(
                f"layout implies D={layout_dim(self.layout)} but values have D={vals.shape[1]}"
            )
        if ts.shape[0] >= 2 and not np.all(np.diff(ts) > 0):
            raise InvalidArgumentError("timestamps_s must be strictly increasing")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps_s", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "layout", tuple(self.layout))


def resample_chunk(track: TimedTrack, spec: WindowSpec) -> ActionChunk:
    """Resample a track onto target_length uniform timestamps over the window.

    The window starts at the track's first timestamp and extends forward by
    window_seconds. Position and gripper columns interpolate linearly;
    rotation columns interpolate by SLERP (Euler groups are converted to
    quaternions, interpolated, and converted back).
    """
    ts = track.timestamps_s
    vals = track.values
    n = ts.shape[0]
    if n < 2:
        raise InsufficientDataError(f"resampling needs at least 2 samples, got {n}")
    span = float(ts[-1] - ts[0])
    if span + 1e-9 < spec.window_seconds:
        raise InsufficientDataError(
            f"track spans {span:.6f} s but the window needs {spec.window_seconds:.6f} s "
            f"({spec.window_seconds - span:.6f} s short)"
        )

    query = ts[0] + np.linspace(0.0, spec.window_seconds, spec.target_length)
    query = np.minimum(query, ts[-1])  # guard float overshoot at the last sample
    seg = np.clip(np.searchsorted(ts, query, side="right") - 1, 0, n - 2)
    frac = (query - ts[seg]) / (ts[seg + 1] - ts[seg])

    out = np.empty((spec.target_length, vals.shape[1]), dtype=np.float64)
    for kind, cols in layout_slices(track.layout):
        lo = vals[seg, cols]
        hi = vals[seg + 1, cols]
        if kind in ("position", "gripper"):
            out[:, cols] = lo + frac[:, None] * (hi - lo)
        elif kind == "rot_quat":
            # columns are (qx, qy, qz, qw); slerp runs on (w, x, y, z)
            q0 = np.roll(lo, 1, axis=1)
            q1 = np.roll(hi, 1, axis=1)
            out[:, cols] = np.roll(_slerp_batch(q0, q1, frac), -1, axis=1)
        elif kind == "rot_euler":
            q0 = euler_zyx_to_quat(lo)
            q1 = euler_zyx_to_quat(hi)
            out[:, cols] = quat_to_euler_zyx(_slerp_batch(q0, q1, frac))
    return ActionChunk(out, track.layout)


# ---------------------------------------------------------------------------
# quantile normalization


@dataclass(frozen=True)
class QuantileStats:
    """Per-feature low/high quantiles used for affine [-1, 1] normalization."""

    q_lo: np.ndarray
    q_hi: np.ndarray

    def __post_init__(self):
        lo = np.ascontiguousarray(self.q_lo, dtype=np.float64)
        hi = np.ascontiguousarray(self.q_hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InvalidArgumentError(
                f"q_lo and q_hi must be equal-length vectors, got {lo.shape} and {hi.shape}"
            )
        if np.any(lo > hi):
            raise InvalidArgumentError("q_lo must be <= q_hi per feature")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "q_lo", lo)
        object.__setattr__(self, "q_hi", hi)

    @property
    def dim(self) -> int:
        return int(self.q_lo.shape[0])

    @property
    def degenerate_features(self) -> tuple[int, ...]:
        """Indices of constant features (q_lo == q_hi); these normalize to 0."""
        return tuple(int(i) for i in np.nonzero(self.q_hi == self.q_lo)[0])


def quantile_stats(samples: np.ndarray, lo: float = 0.01, hi: float = 0.99) -> QuantileStats:
    """Empirical per-feature quantiles of an (N, D) sample matrix.

    Uses linear interpolation between closest order statistics.
    """
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidArgumentError(f"samples must be (N, D), got shape {data.shape}")
    if data.shape[0] < 2:
        raise InvalidArgumentError(f"need at least 2 samples, got {data.shape[0]}")
    if not (0.0 <= lo < hi <= 1.0):
        raise InvalidArgumentError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    q = np.quantile(data, [lo, hi], axis=0, method="linear")
    return QuantileStats(q[0], q[1])


def quantile_normalize(x: np.ndarray, stats: QuantileStats) -> np.ndarray:
    """Map features affinely so [q_lo, q_hi] lands on [-1, 1]:

        x_hat = 2 * (x - q_lo) / (q_hi - q_lo) - 1

    Degenerate features (q_hi == q_lo) map to 0 exactly.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != stats.dim:
        raise InvalidArgumentError(f"x has dim {arr.shape[-1]}, stats expect {stats.dim}")
    span = stats.q_hi - stats.q_lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (arr - stats.q_lo) / safe - 1.0
    return np.where(span > 0, out, 0.0)


def quantile_denormalize(x: np.ndarray, stats: QuantileStats) -> np.ndarray:
    """Inverse of quantile_normalize on non-degenerate features.

    Degenerate features recover their constant value q_lo.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != stats.dim:
        raise InvalidArgumentError(f"x has dim {arr.shape[-1]}, stats expect {stats.dim}")
    span = stats.q_hi - stats.q_lo
    return np.where(span > 0, stats.q_lo + (arr + 1.0) / 2.0 * span, stats.q_lo)


# ---------------------------------------------------------------------------
# metrics


def avg_mse(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared error averaged over timesteps and action dimensions:

        (1/T) sum_t (1/D) ||pred_t - gt_t||^2

    Per-episode value; aggregate across episodes with a plain mean.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.ndim != 2 or p.shape != g.shape:
        raise InvalidArgumentError(f"pred and gt must be equal (T, D) matrices, got {p.shape} vs {g.shape}")
    return float(np.mean((p - g) ** 2))


def normalized_score(points: float, max_points: float) -> float:
    """Total points scored divided by the maximum possible, clamped to [0, 1]."""
    if max_points <= 0:
        raise InvalidArgumentError(f"max_points must be positive, got {max_points}")
    if points < 0:
        raise InvalidArgumentError(f"points must be non-negative, got {points}")
    return min(float(points) / float(max_points), 1.0)
