"""Processing orchestrator: raw episode blobs to canonical training format.

A round plans one job per unprocessed episode, decodes each raw blob through
its source adapter, builds per-frame action chunks with the alignment math
(human: future effector points re-expressed in the anchor frame's device
pose over a 1.0 s window; robot: end-effector poses projected into the
anchor frame's camera over a 1.5 s window; both resampled to 100 steps),
writes the canonical container plus a strided preview image sequence to the
store, and records the outcome in the registry. Failures are per-episode
and never block the rest of a round.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Protocol

import numpy as np

from . import align
from .canonical_io import encode_canonical
from .datamodel import CanonicalEpisode
from .errors import (
    AdapterDecodeError,
    EgodbError,
    InvalidArgumentError,
    NotFoundError,
    TransportError,
)
from .ingest import ObjectStore
from .registry import EpisodeFilter

logger = logging.getLogger(__name__)

HUMAN_WINDOW_SECONDS = 1.0
ROBOT_WINDOW_SECONDS = 1.5
DEFAULT_CHUNK_LENGTH = 100

PROCESSED_PREFIX = "processed"
PREVIEW_FRAME_PATTERN = "preview_{index:05}.ppm"


@dataclass(frozen=True)
class RetryPolicy:
    """How many processing attempts an episode gets before it is parked."""

    max_attempts: int = 3


@dataclass(frozen=True)
class ProcessingSettings:
    human_window_seconds: float = HUMAN_WINDOW_SECONDS
    robot_window_seconds: float = ROBOT_WINDOW_SECONDS
    chunk_length: int = DEFAULT_CHUNK_LENGTH
    preview_stride: int = 10
    preview_size: int = 64
    # Which of the 21 keypoints per hand becomes the action point (None = all 21).
    action_keypoint_index: Optional[int] = 0
    processing_version: str = "1"


@dataclass(frozen=True)
class ProcessingJob:
    """One unit of work handed to a worker."""

    episode_hash: str
    raw_key: Optional[str]
    embodiment: str
    adapter_id: str
    attempt: int = 1

    def __post_init__(self):
        if self.attempt < 1:
            raise InvalidArgumentError(f"attempt must be >= 1, got {self.attempt}")


@dataclass(frozen=True)
class ProcessingResult:
    """Worker outcome: success fields or an error message, never both."""

    episode_hash: str
    processed_path: Optional[str] = None
    num_frames: Optional[int] = None
    preview_path: Optional[str] = None
    error: Optional[str] = None

    def __post_init__(self):
        success = self.processed_path is not None
        if success == (self.error is not None):
            raise InvalidArgumentError("result must be exactly one of success or failure")

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RoundSummary:
    planned: int = 0
    succeeded: int = 0
    failed: int = 0
    duration_seconds: float = 0.0

    def as_line(self) -> str:
        return f"planned={self.planned} succeeded={self.succeeded} failed={self.failed}"


@dataclass(frozen=True)
class DecodedTracks:
    """Adapter output: synchronized raw tracks ready for alignment."""

    embodiment: str
    fps: float
    timestamps_ns: np.ndarray
    device_rotations: np.ndarray
    device_translations: np.ndarray
    hands: Optional[np.ndarray] = None
    ee_rotations: Optional[np.ndarray] = None
    ee_translations: Optional[np.ndarray] = None
    gripper: Optional[np.ndarray] = None
    rotation_layout: str = "euler"


class SourceAdapter(Protocol):
    """Decodes one raw capture format into DecodedTracks."""

    adapter_id: str

    def decode(self, raw: bytes) -> DecodedTracks: ...


class SyntheticAdapter:
    """Adapter for the documented "synthetic/1" text fixture format.

    The fixture is a JSON object with fields: format ("synthetic/1"),
    embodiment, fps, optional timestamps_ns, device_rotations (F, 4) wxyz,
    device_translations (F, 3), then either hands (F, hands, 21, 3) for human
    episodes or ee_rotations (F, arms, 4) wxyz, ee_translations (F, arms, 3),
    gripper (F, arms) and rotation_layout ("euler" | "quaternion") for robot
    episodes.
    """

    adapter_id = "synthetic/1"

    def decode(self, raw: bytes) -> DecodedTracks:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise AdapterDecodeError(f"not valid synthetic/1 JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format") != "synthetic/1":
            raise AdapterDecodeError("missing or wrong 'format' marker (want synthetic/1)")
        try:
            embodiment = doc["embodiment"]
            fps = float(doc["fps"])
            device_rotations = np.asarray(doc["device_rotations"], dtype=np.float64)
            device_translations = np.asarray(doc["device_translations"], dtype=np.float64)
            frames = device_rotations.shape[0]
            if "timestamps_ns" in doc:
                timestamps_ns = np.asarray(doc["timestamps_ns"], dtype=np.int64)
            else:
                timestamps_ns = np.round(np.arange(frames) / fps * 1e9).astype(np.int64)
            if embodiment == "human":
                tracks = DecodedTracks(
                    embodiment=embodiment,
                    fps=fps,
                    timestamps_ns=timestamps_ns,
                    device_rotations=device_rotations,
                    device_translations=device_translations,
                    hands=np.asarray(doc["hands"], dtype=np.float64),
                )
            elif embodiment == "robot":
                tracks = DecodedTracks(
                    embodiment=embodiment,
                    fps=fps,
                    timestamps_ns=timestamps_ns,
                    device_rotations=device_rotations,
                    device_translations=device_translations,
                    ee_rotations=np.asarray(doc["ee_rotations"], dtype=np.float64),
                    ee_translations=np.asarray(doc["ee_translations"], dtype=np.float64),
                    gripper=np.asarray(doc["gripper"], dtype=np.float64),
                    rotation_layout=doc.get("rotation_layout", "euler"),
                )
            else:
                raise AdapterDecodeError(f"unknown embodiment {embodiment!r}")
        except AdapterDecodeError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterDecodeError(f"malformed synthetic/1 fixture: {exc}") from exc
        _check_decoded(tracks)
        return tracks


def _check_decoded(tracks: DecodedTracks) -> None:
    frames = tracks.timestamps_ns.shape[0]
    if frames < 2:
        raise AdapterDecodeError(f"need at least 2 frames, got {frames}")
    if tracks.device_rotations.shape != (frames, 4):
        raise AdapterDecodeError(
            f"device_rotations must be ({frames}, 4), got {tracks.device_rotations.shape}"
        )
    if tracks.device_translations.shape != (frames, 3):
        raise AdapterDecodeError(
            f"device_translations must be ({frames}, 3), got {tracks.device_translations.shape}"
        )
    if not np.all(np.diff(tracks.timestamps_ns) > 0):
        raise AdapterDecodeError("timestamps must be strictly increasing")
    if tracks.embodiment == "human":
        hands = tracks.hands
        if hands is None or hands.ndim != 4 or hands.shape[0] != frames or hands.shape[2:] != (21, 3):
            raise AdapterDecodeError(
                f"hands must be ({frames}, hands, 21, 3), got "
                f"{None if hands is None else hands.shape}"
            )
    else:
        if tracks.ee_rotations is None or tracks.ee_translations is None or tracks.gripper is None:
            raise AdapterDecodeError("robot fixture requires ee_rotations, ee_translations, gripper")
        arms = tracks.ee_rotations.shape[1] if tracks.ee_rotations.ndim == 3 else 0
        if arms == 0 or tracks.ee_rotations.shape != (frames, arms, 4):
            raise AdapterDecodeError(f"ee_rotations must be (frames, arms, 4), got {tracks.ee_rotations.shape}")
        if tracks.ee_translations.shape != (frames, arms, 3):
            raise AdapterDecodeError(f"ee_translations must be ({frames}, {arms}, 3), got {tracks.ee_translations.shape}")
        if tracks.gripper.shape != (frames, arms):
            raise AdapterDecodeError(f"gripper must be ({frames}, {arms}), got {tracks.gripper.shape}")
        if tracks.rotation_layout not in ("euler", "quaternion"):
            raise AdapterDecodeError(f"unknown rotation_layout {tracks.rotation_layout!r}")


DEFAULT_ADAPTERS: Mapping[str, SourceAdapter] = {
    SyntheticAdapter.adapter_id: SyntheticAdapter(),
}


# ---------------------------------------------------------------------------
# canonical construction


def _relative_to_anchor(anchor_rotation, anchor_translation, rotations, translations):
    """Poses expressed in the anchor pose's frame: inverse(anchor) ∘ pose_j.

    rotations (..., 4) and translations (..., 3) broadcast over leading axes.
    """
    inv_rot = align.quat_conjugate(anchor_rotation)
    rel_rot = align.quat_mul(inv_rot, rotations)
    rel_trans = align.quat_rotate(inv_rot, translations - anchor_translation)
    return rel_rot, rel_trans


def _window_rows(timestamps_s: np.ndarray, anchor: int, window_seconds: float):
    """Frame indices covering [t_anchor, t_anchor + window] plus a pad flag.

    pad is True when the track ends before the window does; the caller then
    holds the last row at the window end so every anchor yields a full chunk.
    """
    t0 = timestamps_s[anchor]
    end = t0 + window_seconds
    last = int(np.searchsorted(timestamps_s, end + 1e-9, side="right")) - 1
    idx = np.arange(anchor, last + 1)
    pad = timestamps_s[last] < end - 1e-9
    return idx, pad, end


def _resample_anchor(times_s, rows, layout, window_seconds, target_length, pad, window_end):
    if pad:
        times_s = np.append(times_s, window_end)
        rows = np.vstack([rows, rows[-1]])
    track = align.TimedTrack(times_s, rows, layout)
    spec = align.WindowSpec(window_seconds=window_seconds, target_length=target_length)
    return align.resample_chunk(track, spec).values


def build_canonical(
    decoded: DecodedTracks,
    episode_hash: str,
    raw_digest: str,
    settings: ProcessingSettings = ProcessingSettings(),
) -> CanonicalEpisode:
    """Turn decoded tracks into the canonical episode with per-frame chunks."""
    ts_s = decoded.timestamps_ns.astype(np.float64) * 1e-9
    frames = ts_s.shape[0]
    dev_rot = align.quat_normalize(np.asarray(decoded.device_rotations, dtype=np.float64))
    dev_trans = np.asarray(decoded.device_translations, dtype=np.float64)

    if decoded.embodiment == "human":
        window = settings.human_window_seconds
        hands = np.asarray(decoded.hands, dtype=np.float64)
        if settings.action_keypoint_index is None:
            points = hands.reshape(frames, -1, 3)
        else:
            points = hands[:, :, settings.action_keypoint_index, :]
        num_points = points.shape[1]
        layout = ("position",) * num_points
        dim = 3 * num_points
        chunks = np.empty((frames, settings.chunk_length, dim))
        for a in range(frames):
            idx, pad, end = _window_rows(ts_s, a, window)
            rel_rot, rel_trans = _relative_to_anchor(
                dev_rot[a], dev_trans[a], dev_rot[idx], dev_trans[idx]
            )
            moved = align.quat_rotate(rel_rot[:, None, :], points[idx]) + rel_trans[:, None, :]
            rows = moved.reshape(idx.shape[0], dim)
            chunks[a] = _resample_anchor(
                ts_s[idx], rows, layout, window, settings.chunk_length, pad, end
            )
        return CanonicalEpisode(
            episode_hash=episode_hash,
            embodiment="human",
            fps=decoded.fps,
            chunk_length=settings.chunk_length,
            action_dim=dim,
            action_layout=layout,
            timestamps_ns=decoded.timestamps_ns,
            device_rotations=dev_rot,
            device_translations=dev_trans,
            action_chunks=chunks,
            hands=hands,
            raw_digest=raw_digest,
            processing_version=settings.processing_version,
        )

    window = settings.robot_window_seconds
    ee_rot = align.quat_normalize(np.asarray(decoded.ee_rotations, dtype=np.float64))
    ee_trans = np.asarray(decoded.ee_translations, dtype=np.float64)
    grip = np.asarray(decoded.gripper, dtype=np.float64)
    arms = ee_rot.shape[1]
    if decoded.rotation_layout == "euler":
        arm_layout = ("position", "rot_euler", "gripper")
        arm_dim = 7
    else:
        arm_layout = ("position", "rot_quat", "gripper")
        arm_dim = 8
    layout = arm_layout * arms
    dim = arm_dim * arms
    chunks = np.empty((frames, settings.chunk_length, dim))
    for a in range(frames):
        idx, pad, end = _window_rows(ts_s, a, window)
        rows = np.empty((idx.shape[0], dim))
        for arm in range(arms):
            # the anchor frame's camera is the stable action frame
            rel_rot, rel_trans = _relative_to_anchor(
                dev_rot[a], dev_trans[a], ee_rot[idx, arm], ee_trans[idx, arm]
            )
            col = arm * arm_dim
            rows[:, col:col + 3] = rel_trans
            if decoded.rotation_layout == "euler":
                rows[:, col + 3:col + 6] = align.quat_to_euler_zyx(rel_rot)
                rows[:, col + 6] = grip[idx, arm]
            else:
                rows[:, col + 3:col + 7] = np.roll(rel_rot, -1, axis=1)  # wxyz -> xyzw
                rows[:, col + 7] = grip[idx, arm]
        chunks[a] = _resample_anchor(
            ts_s[idx], rows, layout, window, settings.chunk_length, pad, end
        )
    return CanonicalEpisode(
        episode_hash=episode_hash,
        embodiment="robot",
        fps=decoded.fps,
        chunk_length=settings.chunk_length,
        action_dim=dim,
        action_layout=layout,
        timestamps_ns=decoded.timestamps_ns,
        device_rotations=dev_rot,
        device_translations=dev_trans,
        action_chunks=chunks,
        ee_rotations=ee_rot,
        ee_translations=ee_trans,
        gripper=grip,
        raw_digest=raw_digest,
        processing_version=settings.processing_version,
    )


# ---------------------------------------------------------------------------
# preview rendering


def render_preview_frames(ep: CanonicalEpisode, settings: ProcessingSettings) -> list[bytes]:
    """Strided contact-sheet previews: effector points dotted on a dark canvas."""
    if ep.embodiment == "human":
        points = ep.hands[:, :, 0, :]
    else:
        points = ep.ee_translations
    size = settings.preview_size
    xy = points[..., :2]
    lo = xy.reshape(-1, 2).min(axis=0)
    hi = xy.reshape(-1, 2).max(axis=0)
    span = np.where(hi - lo > 1e-9, hi - lo, 1.0)
    frames = []
    for f in range(0, ep.num_frames, settings.preview_stride):
        canvas = np.full((size, size, 3), 24, dtype=np.uint8)
        scaled = (xy[f] - lo) / span * (size - 5) + 2
        for px, py in scaled:
            x, y = int(px), int(size - 1 - py)
            canvas[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2] = (230, 230, 230)
        frames.append(b"P6\n%d %d\n255\n" % (size, size) + canvas.tobytes())
    return frames


# ---------------------------------------------------------------------------
# orchestration


def plan_jobs(
    registry,
    retry_policy: RetryPolicy = RetryPolicy(),
    adapter_id: str = SyntheticAdapter.adapter_id,
) -> list[ProcessingJob]:
    """One job per live episode without a processed_path.

    Episodes carrying a processing_error are retried only while their attempt
    count is below the policy maximum. Order is the registry's deterministic
    (lab, task, hash) order.
    """
    jobs = []
    for record in registry.query(EpisodeFilter(has_processed_path=False)):
        aux = registry.get_aux(record.episode_hash)
        if record.processing_error is not None and aux.processing_attempts >= retry_policy.max_attempts:
            continue
        jobs.append(ProcessingJob(
            episode_hash=record.episode_hash,
            raw_key=aux.raw_path,
            embodiment=record.embodiment,
            adapter_id=adapter_id,
            attempt=aux.processing_attempts + 1,
        ))
    return jobs


def process_episode(
    job: ProcessingJob,
    store: ObjectStore,
    adapters: Mapping[str, SourceAdapter] = DEFAULT_ADAPTERS,
    settings: ProcessingSettings = ProcessingSettings(),
) -> ProcessingResult:
    """Convert one raw blob to canonical form; returns failure, never raises.

    On success the canonical container and preview frames are in the store;
    on failure nothing durable is written under the episode's processed key.
    """
    def failure(message: str) -> ProcessingResult:
        return ProcessingResult(episode_hash=job.episode_hash, error=message)

    if job.raw_key is None:
        return failure("raw blob missing: no raw_path recorded at registration")
    try:
        raw = store.get(job.raw_key)
    except NotFoundError:
        return failure(f"raw blob missing: {job.raw_key}")
    except TransportError as exc:
        return failure(f"store read failure: {exc}")

    adapter = adapters.get(job.adapter_id)
    if adapter is None:
        return failure(f"no adapter registered for {job.adapter_id!r}")
    try:
        decoded = adapter.decode(raw)
    except AdapterDecodeError as exc:
        return failure(f"decode failure: {exc}")

    try:
        episode = build_canonical(
            decoded,
            episode_hash=job.episode_hash,
            raw_digest=hashlib.sha256(raw).hexdigest(),
            settings=settings,
        )
        blob = encode_canonical(episode)
        previews = render_preview_frames(episode, settings)
    except EgodbError as exc:
        return failure(f"alignment failure: {exc}")

    prefix = f"{PROCESSED_PREFIX}/{job.episode_hash}"
    processed_key = f"{prefix}/canonical.bin"
    try:
        for i, frame in enumerate(previews):
            store.put(f"{prefix}/{PREVIEW_FRAME_PATTERN.format(index=i)}", frame)
        store.put(processed_key, blob)  # canonical last: its presence is the commit point
    except TransportError as exc:
        return failure(f"store write failure: {exc}")
    return ProcessingResult(
        episode_hash=job.episode_hash,
        processed_path=processed_key,
        num_frames=episode.num_frames,
        preview_path=prefix,
    )


def run_round(
    registry,
    store: ObjectStore,
    adapters: Mapping[str, SourceAdapter] = DEFAULT_ADAPTERS,
    max_parallel: int = 4,
    retry_policy: RetryPolicy = RetryPolicy(),
    settings: ProcessingSettings = ProcessingSettings(),
) -> RoundSummary:
    """Plan and execute one processing round with bounded parallelism.

    Every job's outcome is written back through update_processing exactly
    once (three write attempts before the job counts as failed); one bad
    episode never blocks the others.
    """
    if max_parallel < 1:
        raise InvalidArgumentError(f"max_parallel must be >= 1, got {max_parallel}")
    started = time.monotonic()
    jobs = plan_jobs(registry, retry_policy)
    summary = RoundSummary(planned=len(jobs))

    def run_job(job: ProcessingJob) -> ProcessingResult:
        try:
            return process_episode(job, store, adapters, settings)
        except Exception as exc:  # defensive: a worker crash is a job failure
            logger.exception("worker crashed on %s", job.episode_hash)
            return ProcessingResult(episode_hash=job.episode_hash, error=f"worker crash: {exc}")

    if jobs:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = []

    for result in results:
        written = False
        for _ in range(3):
            try:
                if result.ok:
                    registry.update_processing(
                        result.episode_hash,
                        processed_path=result.processed_path,
                        num_frames=result.num_frames,
                        mp4_path=result.preview_path,
                    )
                else:
                    registry.update_processing(
                        result.episode_hash, processing_error=result.error
                    )
                written = True
                break
            except TransportError as exc:
                logger.warning("registry write-back failed, retrying: %s", exc)
        if written and result.ok:
            summary.succeeded += 1
        else:
            summary.failed += 1
    summary.duration_seconds = time.monotonic() - started
    return summary
