"""Dataset access layer: resolve, sync to a local cache, and split.

resolve() narrows a registry query to trainable episodes (processed, right
embodiment, not deleted). sync() materializes their blobs under
{cache_dir}/{episode_hash}/ with digest-verified skip-existing semantics and
bounded parallel transfers. split() produces deterministic train / valid /
total / percent subsets from a seeded permutation, reproducible across
platforms.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .datamodel import EpisodeRecord
from .errors import EgodbError, InvalidArgumentError, TransportError
from .ingest import ObjectStore
from .registry import EpisodeFilter

SPLIT_MODES = ("train", "valid", "total", "percent")

CANONICAL_BASENAME = "canonical.bin"
RECORD_BASENAME = "record.meta"
LOCK_BASENAME = ".sync.lock"


@dataclass(frozen=True)
class SyncConfig:
    """Declarative sync request, loadable from a JSON config file."""

    filter: EpisodeFilter = EpisodeFilter()
    embodiment: Optional[str] = None
    cache_dir: str = "cache"
    parallelism: int = 4
    mode: str = "total"
    val_ratio: float = 0.0
    percent: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise InvalidArgumentError(f"mode must be one of {SPLIT_MODES}, got {self.mode!r}")
        if self.parallelism < 1:
            raise InvalidArgumentError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.mode in ("train", "valid") and not 0.0 <= self.val_ratio < 1.0:
            raise InvalidArgumentError(f"val_ratio must lie in [0, 1), got {self.val_ratio}")
        if self.mode == "percent" and not 0.0 < self.percent <= 100.0:
            raise InvalidArgumentError(f"percent must lie in (0, 100], got {self.percent}")


def load_sync_config(path) -> SyncConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    flt = EpisodeFilter.from_params(doc.get("filter", {}))
    kwargs = {k: doc[k] for k in
              ("embodiment", "cache_dir", "parallelism", "mode", "val_ratio", "percent", "seed")
              if k in doc}
    return SyncConfig(filter=flt, **kwargs)


def resolve(config: SyncConfig, registry) -> list[EpisodeRecord]:
    """Trainable episodes for a config: filtered, processed, embodiment-matched.

    Deleted episodes and episodes without a processed_path are dropped;
    embodiment mismatches are skipped when the config requests one. Order is
    the registry's deterministic (lab, task, hash) order.
    """
    records = registry.query(config.filter)
    out = []
    for record in records:
        if record.processed_path is None:
            continue
        if config.embodiment is not None and record.embodiment != config.embodiment:
            continue
        out.append(record)
    return out


@dataclass
class SyncReport:
    downloaded: int = 0
    skipped: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def as_line(self) -> str:
        return f"downloaded={self.downloaded} skipped={self.skipped} failed={self.failed}"


class _CacheLock:
    """Single-writer guard on a cache directory via an exclusive lock file."""

    def __init__(self, cache_dir: Path, wait: bool, timeout: float = 60.0):
        self.path = cache_dir / LOCK_BASENAME
        self.wait = wait
        self.timeout = timeout

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                return self
            except FileExistsError:
                if not self.wait:
                    raise TransportError(
                        f"cache {self.path.parent} is locked by another sync", retryable=True
                    ) from None
                if time.monotonic() > deadline:
                    raise TransportError(
                        f"timed out waiting for cache lock {self.path}", retryable=True
                    ) from None
                time.sleep(0.05)

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _fetch_blob(store: ObjectStore, key: str, dest: Path) -> bool:
    """Materialize one blob; returns True when bytes actually moved.

    Existing files with a matching digest are left alone; everything else is
    written to a temp path and renamed so a failed transfer never leaves a
    partial file at the final path.
    """
    stat = store.head(key)
    if dest.exists():
        local_digest = hashlib.sha256(dest.read_bytes()).hexdigest()
        if local_digest == stat.sha256:
            return False
    data = store.get(key)
    tmp = dest.parent / f".{dest.name}.tmp-{os.getpid()}"
    tmp.write_bytes(data)
    tmp.replace(dest)
    return True


def sync(
    records: list[EpisodeRecord],
    store: ObjectStore,
    cache_dir,
    parallelism: int = 4,
    wait_for_lock: bool = True,
) -> tuple[list[Path], SyncReport]:
    """Materialize each episode under {cache_dir}/{episode_hash}/.

    Layout per episode: canonical.bin, preview_*.ppm, record.meta. Episodes
    already fully present (digest match) count as skipped. Per-episode
    failures are recorded and the rest still sync.
    """
    if parallelism < 1:
        raise InvalidArgumentError(f"parallelism must be >= 1, got {parallelism}")
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    report = SyncReport()
    paths: list[Path] = []

    def sync_episode(record: EpisodeRecord) -> tuple[Path, Optional[str], bool]:
        episode_dir = cache / record.episode_hash
        episode_dir.mkdir(parents=True, exist_ok=True)
        moved = False
        try:
            if record.processed_path is None:
                raise InvalidArgumentError("record has no processed_path")
            moved |= _fetch_blob(store, record.processed_path, episode_dir / CANONICAL_BASENAME)
            if record.mp4_path:
                prefix = record.mp4_path.rstrip("/") + "/"
                for key in store.list(prefix):
                    name = key.rsplit("/", 1)[-1]
                    if name.startswith("preview_"):
                        moved |= _fetch_blob(store, key, episode_dir / name)
            meta_path = episode_dir / RECORD_BASENAME
            meta_doc = json.dumps(record.to_dict(), indent=2, sort_keys=True)
            if not meta_path.exists() or meta_path.read_text(encoding="utf-8") != meta_doc:
                meta_path.write_text(meta_doc, encoding="utf-8")
                moved = True
            return episode_dir, None, moved
        except (EgodbError, OSError) as exc:
            return episode_dir, f"{record.episode_hash}: {exc}", moved

    with _CacheLock(cache, wait=wait_for_lock):
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(sync_episode, records))

    for episode_dir, error, moved in outcomes:
        if error is not None:
            report.failed += 1
            report.failures.append(error)
            continue
        paths.append(episode_dir)
        if moved:
            report.downloaded += 1
        else:
            report.skipped += 1
    return paths, report


def _permutation_key(seed: int, episode_hash: str) -> str:
    return hashlib.sha256(f"{seed}:{episode_hash}".encode("utf-8")).hexdigest()


def split(
    records: list[EpisodeRecord],
    mode: str,
    val_ratio: float = 0.0,
    percent: float = 100.0,
    seed: int = 0,
) -> list[EpisodeRecord]:
    """Deterministic subset selection over episodes (never frames).

    A seeded pseudo-random permutation orders episodes by the digest of
    "{seed}:{episode_hash}", giving platform-independent shuffles. The last
    floor(n * val_ratio) episodes of the permutation form the validation
    set; "percent" takes the first ceil(n * percent / 100); "total" returns
    the input unchanged. percent subsets are prefixes of each other for
    increasing percent under one seed.
    """
    if mode not in SPLIT_MODES:
        raise InvalidArgumentError(f"mode must be one of {SPLIT_MODES}, got {mode!r}")
    if mode == "total":
        return list(records)
    if mode == "percent":
        if not 0.0 < percent <= 100.0:
            raise InvalidArgumentError(f"percent must lie in (0, 100], got {percent}")
    elif not 0.0 <= val_ratio < 1.0:
        raise InvalidArgumentError(f"val_ratio must lie in [0, 1), got {val_ratio}")

    perm = sorted(records, key=lambda r: _permutation_key(seed, r.episode_hash))
    n = len(perm)
    if mode == "percent":
        take = math.ceil(n * percent / 100.0)
        return perm[:take]
    n_valid = math.floor(n * val_ratio)
    if mode == "valid":
        return perm[n - n_valid:] if n_valid else []
    return perm[:n - n_valid]
