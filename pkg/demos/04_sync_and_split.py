"""Dataset access: resolve processed episodes, sync them to a local cache,
and carve deterministic train/valid/percent subsets.

Run:  python demos/04_sync_and_split.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from egodb.ingest import LocalFileSystemStore, scan_once, upload_episode
from egodb.pipeline import run_round
from egodb.registry import Registry
from egodb.syncset import SyncConfig, resolve, split, sync

rng = np.random.default_rng(3)
workdir = Path(tempfile.mkdtemp(prefix="egodb-demo-"))
store = LocalFileSystemStore(workdir / "store")
registry = Registry(str(workdir / "registry.db"))


def fixture(frames=40):
    quats = rng.standard_normal((frames, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return json.dumps({
        "format": "synthetic/1",
        "embodiment": "human",
        "fps": 30.0,
        "device_rotations": quats.tolist(),
        "device_translations": (rng.standard_normal((frames, 3)) * 0.01).cumsum(0).tolist(),
        "hands": (rng.standard_normal((frames, 2, 21, 3)) * 0.2).tolist(),
    }).encode()


print("seeding ten processed episodes under", workdir)
for i in range(10):
    upload_episode(store, fixture(), {
        "operator": "op-0", "lab": "lab-a", "task": "fold-clothes", "scene": "kitchen",
        "embodiment": "human", "objects": [], "is_eval": False, "task_description": "",
    }, nonce=f"split-demo-{i}")
scan_once(store, registry)
run_round(registry, store, max_parallel=4)

print()
print("=" * 70)
print("1. Resolve: filtered, processed, embodiment-matched episodes")
print("=" * 70)

config = SyncConfig(embodiment="human", cache_dir=str(workdir / "cache"),
                    mode="train", val_ratio=0.2, seed=11)
records = resolve(config, registry)
print(f"resolved {len(records)} trainable episodes")

print()
print("=" * 70)
print("2. Deterministic splits")
print("=" * 70)

train = split(records, "train", val_ratio=0.2, seed=11)
valid = split(records, "valid", val_ratio=0.2, seed=11)
print(f"train={len(train)} valid={len(valid)} (floor(10 * 0.2) = 2 validation episodes)")
assert {r.episode_hash for r in train}.isdisjoint({r.episode_hash for r in valid})

again = split(records, "train", val_ratio=0.2, seed=11)
print("same seed reproduces the same subset:",
      [r.episode_hash[:8] for r in train] == [r.episode_hash[:8] for r in again])

print("\npercent subsets are nested prefixes under one seed:")
previous = []
for pct in (20, 50, 100):
    subset = [r.episode_hash[:8] for r in split(records, "percent", percent=pct, seed=11)]
    print(f"  percent={pct:3d} -> {subset}")
    assert subset[: len(previous)] == previous
    previous = subset

print()
print("=" * 70)
print("3. Sync to a local cache (skip-existing, digest-verified)")
print("=" * 70)

paths, report = sync(train, store, config.cache_dir, parallelism=3)
print("cold cache: ", report.as_line())
paths, report = sync(train, store, config.cache_dir, parallelism=3)
print("warm cache: ", report.as_line())
episode_dir = paths[0]
print("cache layout for one episode:")
for child in sorted(episode_dir.iterdir()):
    print("   ", child.name, f"({child.stat().st_size} bytes)")
registry.close()
