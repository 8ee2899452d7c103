"""Flow-matching kernel walkthrough: probability path, loss, Euler sampling,
co-training batches.

Run:  python demos/02_flow_matching.py
"""

import numpy as np

from egodb import flowmatch

rng = np.random.default_rng(1)

print("=" * 70)
print("1. The linear probability path x_tau = tau*a0 + (1-tau)*a1")
print("=" * 70)

# a1 is a target action chunk (T x D); a0 is Gaussian noise of the same shape.
T, D = 100, 14
a1 = np.cumsum(rng.standard_normal((T, D)) * 0.05, axis=0)
a0 = rng.standard_normal((T, D))

for tau in (1.0, 0.5, 0.0):
    x = flowmatch.interpolate_path(a0, a1, tau)
    label = {1.0: "pure noise", 0.5: "halfway", 0.0: "pure data"}[tau]
    print(f"tau={tau:3}  |x - a1| = {np.abs(x - a1).max():8.4f}   ({label})")

print()
print("=" * 70)
print("2. The training target is the constant velocity a0 - a1")
print("=" * 70)

target = flowmatch.cfm_target(a0, a1)
print("loss at the exact target:     ", flowmatch.cfm_loss(target, a0, a1))
print("loss at target + 2 everywhere:", flowmatch.cfm_loss(target + 2.0, a0, a1))

print()
print("=" * 70)
print("3. Timesteps draw from Beta(1.5, 1.0), biased toward the noise end")
print("=" * 70)

draws = np.array([flowmatch.sample_timestep(rng) for _ in range(50_000)])
print(f"mean = {draws.mean():.4f} (analytic 0.6), min = {draws.min():.2e}, max = {draws.max():.4f}")
hist, edges = np.histogram(draws, bins=10, range=(0, 1))
for count, lo in zip(hist, edges):
    print(f"  [{lo:.1f}, {lo + 0.1:.1f})  {'#' * int(60 * count / hist.max())}")

print()
print("=" * 70)
print("4. Inference: Euler integration from tau=1 down to tau=0")
print("=" * 70)

# With the exact conditional field the linear path integrates exactly,
# regardless of step count. Ten steps is the shipped default.
for steps in (1, flowmatch.DEFAULT_INFERENCE_STEPS, 100):
    out = flowmatch.euler_integrate(lambda x, tau: a0 - a1, a0, steps)
    print(f"steps={steps:4d}   |result - a1| = {np.abs(out - a1).max():.2e}")

# A state-dependent field shows the usual first-order Euler error decay.
field = lambda x, tau: np.sin(x) + tau
x0 = rng.standard_normal((4, 4))
fine = flowmatch.euler_integrate(field, x0, 100_000)
print("\nfirst-order convergence on a nonlinear field:")
for steps in (10, 20, 40, 80):
    err = np.abs(flowmatch.euler_integrate(field, x0, steps) - fine).max()
    print(f"  steps={steps:3d}  error={err:.3e}")

print()
print("=" * 70)
print("5. Co-training batches hold an exact 1:1 human-to-robot ratio")
print("=" * 70)

human_pool = [("human", i) for i in range(500)]
robot_pool = [("robot", i) for i in range(180)]
batch = flowmatch.compose_cotrain_batch(human_pool, robot_pool, 32, rng)
print(f"batch of 32 -> {len(batch.human_items)} human + {len(batch.robot_items)} robot")
try:
    flowmatch.compose_cotrain_batch(human_pool, robot_pool, 31, rng)
except Exception as exc:
    print("batch of 31 ->", type(exc).__name__, "-", exc)
