"""Fast invariant suites behind `egodb selftest {align,flowmatch}`.

Each suite returns a list of failure descriptions (empty = healthy). The
flow-matching suite takes its operations as parameters so a harness can
inject a broken variant and confirm the suite catches it.
"""

from __future__ import annotations

import numpy as np

from . import align, flowmatch
from .datamodel import Pose6D


def run_align_selftest(trials: int = 200, seed: int = 0) -> list[str]:
    rng = np.random.default_rng(seed)
    failures: list[str] = []

    def random_pose() -> Pose6D:
        return Pose6D(rng.standard_normal(4), rng.standard_normal(3))

    for _ in range(trials):
        p = random_pose()
        if not align.pose_compose(p, align.pose_inverse(p)).allclose(Pose6D.identity(), atol=1e-9):
            failures.append("pose_compose(p, inverse(p)) is not identity")
            break

    # constant device track leaves future points unchanged
    k = 8
    track = [random_pose()] * (k + 1)
    points = rng.standard_normal((k + 1, 2, 3))
    chunk = align.build_human_action_chunk(track, points)
    if not np.allclose(chunk.values, points[1:].reshape(k, -1), atol=1e-9):
        failures.append("stationary device does not reproduce raw future points")

    # left-multiplying the device track by a rigid transform cancels out
    moving = [random_pose() for _ in range(k + 1)]
    base = align.build_human_action_chunk(moving, points).values
    for _ in range(20):
        g = random_pose()
        shifted = [align.pose_compose(g, pose) for pose in moving]
        if not np.allclose(align.build_human_action_chunk(shifted, points).values, base, atol=1e-9):
            failures.append("action chunk is not invariant to a device-frame change")
            break

    for _ in range(trials):
        q0 = align.quat_normalize(rng.standard_normal(4))
        q1 = align.quat_normalize(rng.standard_normal(4))
        t = float(rng.random())
        out = align.slerp(q0, q1, t)
        if abs(float(np.linalg.norm(out)) - 1.0) > 1e-9:
            failures.append("slerp output is not unit norm")
            break
        ends0 = align.slerp(q0, q1, 0.0)
        if min(np.abs(ends0 - q0).max(), np.abs(ends0 + q0).max()) > 1e-9:
            failures.append("slerp(t=0) is not q0")
            break

    samples = rng.standard_normal((500, 6))
    stats = align.quantile_stats(samples)
    x = rng.standard_normal(6)
    if not np.allclose(align.quantile_denormalize(align.quantile_normalize(x, stats), stats), x, atol=1e-9):
        failures.append("quantile denormalize does not invert normalize")

    ts = np.arange(30) / 29.0
    vals = np.linspace(0.0, 1.0, 30)[:, None] * np.ones((1, 3))
    spec = align.WindowSpec(window_seconds=1.0, target_length=100)
    out = align.resample_chunk(align.TimedTrack(ts, vals, ("position",)), spec)
    if out.chunk_length != 100:
        failures.append("resample_chunk output length differs from target_length")
    if not np.allclose(out.values[:, 0], np.linspace(0.0, 1.0, 100), atol=1e-9):
        failures.append("resampling a linear ramp is not linear")

    a = rng.standard_normal((7, 3))
    if align.avg_mse(a, a) != 0.0:
        failures.append("avg_mse of equal inputs is not 0")
    if abs(align.avg_mse(a + 1.0, a) - 1.0) > 1e-12:
        failures.append("avg_mse of a unit offset is not 1")
    return failures


def run_flowmatch_selftest(
    euler_fn=flowmatch.euler_integrate,
    interpolate_fn=flowmatch.interpolate_path,
    loss_fn=flowmatch.cfm_loss,
    trials: int = 50,
    seed: int = 0,
) -> list[str]:
    rng = np.random.default_rng(seed)
    failures: list[str] = []

    for _ in range(trials):
        a0 = rng.standard_normal((5, 4))
        a1 = rng.standard_normal((5, 4))
        for steps in (1, 10, 100):
            final = euler_fn(lambda x, tau: a0 - a1, a0, steps)
            if float(np.abs(final - a1).max()) > 1e-12:
                failures.append(
                    f"integrating the exact field over {steps} steps does not land on the target"
                )
                break
        else:
            continue
        break

    a0 = rng.standard_normal((3, 2))
    a1 = rng.standard_normal((3, 2))
    if float(np.abs(euler_fn(lambda x, tau: np.zeros_like(x), a0, 10) - a0).max()) != 0.0:
        failures.append("integrating a zero field moved the state")

    if loss_fn(a0 - a1, a0, a1) != 0.0:
        failures.append("loss of the exact target is not 0")

    # finite-difference consistency of the path derivative
    tau, h = 0.5, 1e-4
    fd = (interpolate_fn(a0, a1, tau + h) - interpolate_fn(a0, a1, tau)) / h
    if float(np.abs(fd - flowmatch.cfm_target(a0, a1)).max()) > 1e-6:
        failures.append("path derivative does not match the velocity target")

    draws = np.array([flowmatch.sample_timestep(rng) for _ in range(20000)])
    if not (np.all(draws > 0.0) and np.all(draws <= 1.0)):
        failures.append("timestep draws left (0, 1]")
    if abs(float(draws.mean()) - 0.6) > 0.02:
        failures.append(f"timestep mean {draws.mean():.4f} is far from 0.6")

    batch = flowmatch.compose_cotrain_batch(list(range(10)), list(range(7)), 32, rng)
    if len(batch.human_items) != 16 or len(batch.robot_items) != 16:
        failures.append("32-item batch is not 16 human + 16 robot")
    return failures
