"""Walkthrough of the alignment math: poses, action chunks, resampling,
quantile normalization.

Run:  python demos/01_alignment_math.py
"""

import numpy as np

from egodb import align
from egodb.datamodel import Pose6D

rng = np.random.default_rng(0)

print("=" * 70)
print("1. SE(3) poses: compose, invert")
print("=" * 70)

# A pose is a unit quaternion (w, x, y, z) plus a translation in meters.
device = Pose6D(np.array([np.cos(0.3), 0.0, 0.0, np.sin(0.3)]), np.array([0.5, 0.0, 1.4]))
print("device pose rotation:", np.round(device.rotation, 4))
print("device pose translation:", device.translation)

round_trip = align.pose_compose(device, align.pose_inverse(device))
print("compose(pose, inverse(pose)) translation ->", np.round(round_trip.translation, 12))

print()
print("=" * 70)
print("2. Human action chunks: future hand points in the anchor device frame")
print("=" * 70)

# A head-mounted device moves forward while the hand stays fixed in space.
# Expressed in the anchor frame, the hand appears to drift backward.
k = 5
track = [Pose6D(np.array([1.0, 0, 0, 0]), np.array([0.1 * i, 0.0, 0.0])) for i in range(k + 1)]
world_hand = np.array([1.0, 0.2, 0.3])
# each frame's point is stored in that frame's device coordinates
per_frame = np.stack([world_hand - np.array([0.1 * i, 0.0, 0.0]) for i in range(k + 1)])
chunk = align.build_human_action_chunk(track, per_frame[:, None, :])
print("rows (hand in anchor frame, constant because the hand never moved):")
print(np.round(chunk.values, 6))

print()
print("=" * 70)
print("3. Robot actions: end-effector pose in the egocentric camera frame")
print("=" * 70)

ee_in_base = Pose6D(np.array([np.cos(0.5), 0, np.sin(0.5), 0]), np.array([0.4, -0.1, 0.2]))
camera_in_base = Pose6D(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, 1.5]))
extrinsics = align.pose_inverse(camera_in_base)  # base -> camera
row7 = align.camera_frame_action(ee_in_base, extrinsics, "euler", gripper=0.8)
row8 = align.camera_frame_action(ee_in_base, extrinsics, "quaternion", gripper=0.8)
print("euler layout  (x y z yaw pitch roll grip):", np.round(row7.values[0], 4))
print("quat  layout  (x y z qx qy qz qw grip):  ", np.round(row8.values[0], 4))

print()
print("=" * 70)
print("4. Window resampling: 31 samples at 30 Hz -> 100 uniform steps")
print("=" * 70)

ts = np.arange(31) / 30.0                      # spans exactly one second
positions = np.stack([np.sin(ts * 3), np.cos(ts * 3), ts], axis=1)
spec = align.WindowSpec(window_seconds=1.0, target_length=100)
resampled = align.resample_chunk(align.TimedTrack(ts, positions, ("position",)), spec)
print("input shape:", positions.shape, "-> output shape:", resampled.values.shape)
print("first row:", np.round(resampled.values[0], 4))
print("last row: ", np.round(resampled.values[-1], 4), "(equals the final sample)")

# rotations go through SLERP, never through raw component interpolation
q0 = np.array([1.0, 0.0, 0.0, 0.0])
q1 = np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])  # 90 deg about z
mid = align.slerp(q0, q1, 0.5)
print("slerp(identity, Rz(90deg), 0.5) ->", np.round(mid, 6), "(= Rz(45deg))")

print()
print("=" * 70)
print("5. Quantile normalization: robust [-1, 1] feature scaling")
print("=" * 70)

actions = rng.standard_normal((5000, 4)) * np.array([0.1, 2.0, 40.0, 1.0])
actions[::500, 2] += 1000.0                    # inject outliers in feature 2
stats = align.quantile_stats(actions)
print("q_lo:", np.round(stats.q_lo, 3))
print("q_hi:", np.round(stats.q_hi, 3))
normalized = align.quantile_normalize(actions, stats)
inside = np.mean((normalized >= -1) & (normalized <= 1))
print(f"fraction of entries inside [-1, 1]: {inside:.3f} (outliers exceed it by design)")
sample = actions[17]
back = align.quantile_denormalize(align.quantile_normalize(sample, stats), stats)
print("round-trip error:", np.abs(back - sample).max())

print()
print("=" * 70)
print("6. Offline metrics")
print("=" * 70)

gt = rng.standard_normal((100, 14))
pred = gt + rng.standard_normal((100, 14)) * 0.05
print("avg mse of a noisy prediction:", round(align.avg_mse(pred, gt), 6))
print("normalized score 3 of 4 points:", align.normalized_score(3, 4))
