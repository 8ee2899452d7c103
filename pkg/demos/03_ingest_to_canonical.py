"""End-to-end ingestion: upload raw episodes, scan them into the registry,
run a processing round, and inspect the canonical output.

Everything runs against a temporary directory; no services required.

Run:  python demos/03_ingest_to_canonical.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from egodb.canonical_io import decode_canonical
from egodb.ingest import LocalFileSystemStore, scan_once, upload_episode
from egodb.pipeline import run_round
from egodb.registry import EpisodeFilter, Registry

rng = np.random.default_rng(2)
workdir = Path(tempfile.mkdtemp(prefix="egodb-demo-"))
store = LocalFileSystemStore(workdir / "store")
registry = Registry(str(workdir / "registry.db"))
print("working under", workdir)


def human_fixture(frames=60, fps=30.0):
    """A synthetic/1 capture: wandering device, two hands of 21 keypoints."""
    quats = rng.standard_normal((frames, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return json.dumps({
        "format": "synthetic/1",
        "embodiment": "human",
        "fps": fps,
        "device_rotations": quats.tolist(),
        "device_translations": np.cumsum(rng.standard_normal((frames, 3)) * 0.01, 0).tolist(),
        "hands": (rng.standard_normal((frames, 2, 21, 3)) * 0.2).tolist(),
    }).encode()


print()
print("=" * 70)
print("1. Upload: raw blob first, metadata sidecar last")
print("=" * 70)

for i, (task, scene) in enumerate([("fold-clothes", "kitchen"),
                                   ("fold-clothes", "lab"),
                                   ("bag-grocery", "kitchen")]):
    manifest = upload_episode(store, human_fixture(), {
        "operator": f"op-{i % 2}", "lab": "lab-a", "task": task, "scene": scene,
        "embodiment": "human", "objects": ["shirt"], "is_eval": False,
        "task_description": f"demo episode {i}",
    }, nonce=f"demo-{i}")
    print(f"uploaded {manifest.raw_key}  hash={manifest.episode_hash[:12]}...")

print()
print("=" * 70)
print("2. Scan: the hourly daemon's single pass")
print("=" * 70)

print("first scan: ", scan_once(store, registry).as_line())
print("second scan:", scan_once(store, registry).as_line(), "(idempotent)")

print()
print("=" * 70)
print("3. Processing round: plan, convert, write back")
print("=" * 70)

summary = run_round(registry, store, max_parallel=2)
print("round:", summary.as_line())

print()
print("=" * 70)
print("4. The canonical container")
print("=" * 70)

record = registry.query(EpisodeFilter(task="fold-clothes"))[0]
episode = decode_canonical(store.get(record.processed_path))
print("episode:", episode.episode_hash[:12], "embodiment:", episode.embodiment)
print("frames:", episode.num_frames, "at", episode.fps, "Hz")
print("chunk shape per frame:", episode.action_chunks.shape[1:],
      "layout:", episode.action_layout)
print("device track:", episode.device_rotations.shape, episode.device_translations.shape)
print("hands track:", episode.hands.shape)
print("provenance: raw digest", episode.raw_digest[:12], "... processing version",
      episode.processing_version)

print()
print("=" * 70)
print("5. Registry views")
print("=" * 70)

for group in registry.stats("task"):
    print(f"  task={group.value:14} episodes={group.episode_count} frames={group.total_frames}")
registry.close()
