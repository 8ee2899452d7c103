"""Flow-matching math kernel, network-free.

The probability path is linear between Gaussian noise a0 and a target action
matrix a1:

    x_tau = tau * a0 + (1 - tau) * a1,   tau in (0, 1]

so tau = 1 is pure noise and tau = 0 is data. Training regresses the constant
conditional velocity (a0 - a1); inference integrates a caller-supplied
velocity field from tau = 1 down to tau = 0 with fixed-step Euler updates
(10 steps by default). Co-training batches hold equal human and robot halves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ContractViolationError, InvalidArgumentError, InvariantViolationError

DEFAULT_INFERENCE_STEPS = 10

# Beta(1.5, 1.0) has no mass at 0 but float draws can round there; the floor
# keeps tau inside the stated half-open interval (0, 1].
TAU_FLOOR = 1e-6

TIMESTEP_ALPHA = 1.5
TIMESTEP_BETA = 1.0

VelocityFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class FlowSample:
    """One training sample on the linear path: (a0, a1, tau, x_tau)."""

    a0: np.ndarray
    a1: np.ndarray
    tau: float
    x_tau: np.ndarray

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=np.float64)
        a1 = np.asarray(self.a1, dtype=np.float64)
        x = np.asarray(self.x_tau, dtype=np.float64)
        if a0.shape != a1.shape or x.shape != a0.shape:
            raise InvariantViolationError(
                f"a0, a1, x_tau must share a shape, got {a0.shape}, {a1.shape}, {x.shape}"
            )
        if not 0.0 < self.tau <= 1.0:
            raise InvariantViolationError(f"tau must lie in (0, 1], got {self.tau}")
        expected = self.tau * a0 + (1.0 - self.tau) * a1
        if x.size and float(np.abs(x - expected).max()) > 1e-12:
            raise InvariantViolationError("x_tau is not tau*a0 + (1-tau)*a1")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "x_tau", x)


def make_flow_sample(a0: np.ndarray, a1: np.ndarray, tau: float) -> FlowSample:
    return FlowSample(a0, a1, tau, interpolate_path(a0, a1, tau))


def sample_timestep(rng: np.random.Generator) -> float:
    """Draw tau ~ Beta(1.5, 1.0), clamped to [TAU_FLOOR, 1].

    Built explicitly from uniform draws as a two-Gamma ratio,
    Beta(a, b) = G_a / (G_a + G_b), with Gamma(1.5) = Gamma(1) + Gamma(0.5)
    via an exponential plus a squared half-normal. Keeping the construction
    on raw uniforms makes the draw sequence reproducible under one seed.
    """
    tiny = np.finfo(np.float64).tiny
    u = rng.random(4)
    exp1 = -math.log(max(u[0], tiny))                       # Gamma(1)
    z = math.sqrt(-2.0 * math.log(max(u[1], tiny))) * math.cos(2.0 * math.pi * u[2])
    gamma_a = exp1 + 0.5 * z * z                            # Gamma(1.5)
    gamma_b = -math.log(max(u[3], tiny))                    # Gamma(1)
    tau = gamma_a / (gamma_a + gamma_b)
    return min(max(tau, TAU_FLOOR), 1.0)


def interpolate_path(a0: np.ndarray, a1: np.ndarray, tau: float) -> np.ndarray:
    """x_tau = tau * a0 + (1 - tau) * a1 elementwise."""
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    if a0.shape != a1.shape:
        raise InvalidArgumentError(f"shape mismatch: {a0.shape} vs {a1.shape}")
    if not 0.0 <= tau <= 1.0:
        raise InvalidArgumentError(f"tau must lie in [0, 1], got {tau}")
    return tau * a0 + (1.0 - tau) * a1


def cfm_target(a0: np.ndarray, a1: np.ndarray) -> np.ndarray:
    """The regression target for the velocity field: a0 - a1.

    This is the path derivative d x_tau / d tau, constant along the line.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    if a0.shape != a1.shape:
        raise InvalidArgumentError(f"shape mismatch: {a0.shape} vs {a1.shape}")
    return a0 - a1


def cfm_loss(predicted_velocity: np.ndarray, a0: np.ndarray, a1: np.ndarray) -> float:
    """Mean squared error between a predicted velocity field and cfm_target."""
    pred = np.asarray(predicted_velocity, dtype=np.float64)
    target = cfm_target(a0, a1)
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def euler_integrate(
    velocity_fn: VelocityFn,
    x_init: np.ndarray,
    steps: int = DEFAULT_INFERENCE_STEPS,
) -> np.ndarray:
    """Integrate the velocity field from tau = 1 down to tau = 0.

    Fixed-step updates x <- x - dtau * v(x, tau); with the exact conditional
    field v = a0 - a1 and x_init = a0 this lands on a1 for any step count,
    since the path is linear.
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    x = np.array(x_init, dtype=np.float64)
    dtau = 1.0 / steps
    for k in range(steps):
        tau = 1.0 - k * dtau
        v = np.asarray(velocity_fn(x, tau), dtype=np.float64)
        if v.shape != x.shape:
            raise ContractViolationError(
                f"velocity_fn returned shape {v.shape}, expected {x.shape}"
            )
        x = x - dtau * v
    return x


@dataclass(frozen=True)
class CotrainBatch:
    """A co-training batch with an exact 1:1 human-to-robot item ratio."""

    human_items: tuple
    robot_items: tuple

    def __post_init__(self):
        object.__setattr__(self, "human_items", tuple(self.human_items))
        object.__setattr__(self, "robot_items", tuple(self.robot_items))
        if len(self.human_items) != len(self.robot_items):
            raise InvariantViolationError(
                f"co-train halves must match: {len(self.human_items)} human vs "
                f"{len(self.robot_items)} robot"
            )

    @property
    def size(self) -> int:
        return len(self.human_items) + len(self.robot_items)


def compose_cotrain_batch(
    human_pool: Sequence[Any],
    robot_pool: Sequence[Any],
    batch_size: int,
    rng: np.random.Generator,
) -> CotrainBatch:
    """Draw batch_size/2 items uniformly (with replacement) from each pool.

    Odd batch sizes are rejected: the 1:1 ratio is exact, not rounded.
    """
    if batch_size <= 0 or batch_size % 2 != 0:
        raise InvalidArgumentError(f"batch_size must be a positive even integer, got {batch_size}")
    if len(human_pool) == 0 or len(robot_pool) == 0:
        raise InvalidArgumentError("both pools must be non-empty")
    half = batch_size // 2
    human_idx = rng.integers(0, len(human_pool), size=half)
    robot_idx = rng.integers(0, len(robot_pool), size=half)
    return CotrainBatch(
        tuple(human_pool[int(i)] for i in human_idx),
        tuple(robot_pool[int(i)] for i in robot_idx),
    )
