"""Episodic demonstration data management.

Ingest raw human and robot demonstration captures into an object store,
register their metadata in a queryable registry, process them into a
canonical training-ready trajectory format with cross-embodiment alignment
math, and serve filtered, split, locally-synced subsets to trainers. A
network-free flow-matching kernel covers the learning-side math at desk
scale.
"""

from .datamodel import (
    ActionChunk,
    CanonicalEpisode,
    EpisodeRecord,
    HandTrack,
    Pose6D,
    make_episode_hash,
    validate_metadata,
)
from .canonical_io import CANONICAL_FORMAT_VERSION, decode_canonical, encode_canonical
from .align import (
    QuantileStats,
    TimedTrack,
    WindowSpec,
    avg_mse,
    build_human_action_chunk,
    camera_frame_action,
    normalized_score,
    pose_compose,
    pose_inverse,
    quantile_denormalize,
    quantile_normalize,
    quantile_stats,
    resample_chunk,
    slerp,
)
from .flowmatch import (
    DEFAULT_INFERENCE_STEPS,
    CotrainBatch,
    FlowSample,
    cfm_loss,
    cfm_target,
    compose_cotrain_batch,
    euler_integrate,
    interpolate_path,
    sample_timestep,
)
from .registry import EpisodeFilter, Registry
from .registry_http import RegistryClient, RegistryServer, open_registry
from .ingest import (
    LocalFileSystemStore,
    ObjectStore,
    UploadManifest,
    open_store,
    run_daemon,
    scan_once,
    upload_episode,
)
from .pipeline import (
    DEFAULT_ADAPTERS,
    ProcessingJob,
    ProcessingResult,
    SyntheticAdapter,
    plan_jobs,
    process_episode,
    run_round,
)
from .syncset import SyncConfig, load_sync_config, resolve, split, sync

__version__ = "0.1.0"
