"""Flow-matching kernel: path, loss, timestep sampling, Euler integration, batches."""

import numpy as np
import pytest

from egodb import flowmatch
from egodb.errors import (
    ContractViolationError,
    InvalidArgumentError,
    InvariantViolationError,
)
from egodb.selftest import run_flowmatch_selftest


class TestInterpolatePath:
    def test_tau_one_is_noise(self, rng):
        a0, a1 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        assert np.array_equal(flowmatch.interpolate_path(a0, a1, 1.0), a0)

    def test_tau_zero_is_data(self, rng):
        a0, a1 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        assert np.array_equal(flowmatch.interpolate_path(a0, a1, 0.0), a1)

    def test_midpoint(self, rng):
        a0, a1 = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        assert np.allclose(flowmatch.interpolate_path(a0, a1, 0.5), (a0 + a1) / 2, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            flowmatch.interpolate_path(np.zeros((2, 2)), np.zeros((3, 2)), 0.5)


class TestFlowSample:
    def test_valid_sample(self, rng):
        a0, a1 = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
        sample = flowmatch.make_flow_sample(a0, a1, 0.25)
        assert sample.tau == 0.25

    def test_inconsistent_x_tau_rejected(self, rng):
        a0, a1 = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
        with pytest.raises(InvariantViolationError):
            flowmatch.FlowSample(a0, a1, 0.5, a0)

    def test_tau_bounds(self, rng):
        a0, a1 = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        with pytest.raises(InvariantViolationError):
            flowmatch.FlowSample(a0, a1, 0.0, a1)
        with pytest.raises(InvariantViolationError):
            flowmatch.FlowSample(a0, a1, 1.5, a0)

    def test_path_derivative_matches_target(self, rng):
        # (x_{tau+h} - x_tau) / h equals a0 - a1 up to O(h)
        a0, a1 = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
        h = 1e-4
        for tau in (0.1, 0.5, 0.9):
            fd = (flowmatch.interpolate_path(a0, a1, tau + h)
                  - flowmatch.interpolate_path(a0, a1, tau)) / h
            assert np.abs(fd - flowmatch.cfm_target(a0, a1)).max() < 1e-9


class TestCfm:
    def test_target_zero_when_equal(self, rng):
        a = rng.standard_normal((4, 4))
        assert np.array_equal(flowmatch.cfm_target(a, a), np.zeros((4, 4)))

    def test_target_ones(self):
        assert np.array_equal(
            flowmatch.cfm_target(np.ones((2, 3)), np.zeros((2, 3))), np.ones((2, 3))
        )

    def test_target_vs_loop_oracle(self, rng):
        a0, a1 = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        got = flowmatch.cfm_target(a0, a1)
        for t in range(5):
            for d in range(3):
                assert got[t, d] == a0[t, d] - a1[t, d]

    def test_loss_exact_target_is_zero(self, rng):
        a0, a1 = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
        assert flowmatch.cfm_loss(a0 - a1, a0, a1) == 0.0

    def test_loss_constant_offset(self, rng):
        a0, a1 = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
        assert flowmatch.cfm_loss(a0 - a1 + 2.0, a0, a1) == pytest.approx(4.0, abs=1e-12)

    def test_loss_vs_double_loop(self, rng):
        pred = rng.standard_normal((4, 3))
        a0, a1 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        total = 0.0
        for t in range(4):
            for d in range(3):
                total += (pred[t, d] - (a0[t, d] - a1[t, d])) ** 2
        assert flowmatch.cfm_loss(pred, a0, a1) == pytest.approx(total / 12, abs=1e-12)

    def test_loss_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            flowmatch.cfm_loss(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)))


class TestSampleTimestep:
    def test_support(self):
        rng = np.random.default_rng(7)
        draws = np.array([flowmatch.sample_timestep(rng) for _ in range(100_000)])
        assert np.all(draws > 0.0)
        assert np.all(draws <= 1.0)

    def test_mean_matches_beta(self):
        # Beta(1.5, 1.0) has mean alpha / (alpha + beta) = 0.6
        rng = np.random.default_rng(11)
        draws = np.array([flowmatch.sample_timestep(rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.6) < 0.01

    def test_cdf_matches_beta(self):
        # Beta(1.5, 1) CDF is x^1.5; check a few points with generous margins
        rng = np.random.default_rng(13)
        draws = np.array([flowmatch.sample_timestep(rng) for _ in range(50_000)])
        for x in (0.2, 0.5, 0.8):
            assert abs(np.mean(draws <= x) - x ** 1.5) < 0.01

    def test_deterministic_under_seed(self):
        a = [flowmatch.sample_timestep(np.random.default_rng(42)) for _ in range(1)]
        first = [flowmatch.sample_timestep(np.random.default_rng(99)) for _ in range(50)]
        second = [flowmatch.sample_timestep(np.random.default_rng(99)) for _ in range(50)]
        assert first == second
        assert a == [flowmatch.sample_timestep(np.random.default_rng(42))]


class TestEulerIntegrate:
    def test_exact_field_reaches_target(self, rng):
        a0, a1 = rng.standard_normal((7, 5)), rng.standard_normal((7, 5))
        for steps in (1, 10, 100):
            out = flowmatch.euler_integrate(lambda x, tau: a0 - a1, a0, steps)
            assert np.abs(out - a1).max() < 1e-12

    def test_zero_field_is_identity(self, rng):
        x0 = rng.standard_normal((3, 3))
        out = flowmatch.euler_integrate(lambda x, tau: np.zeros_like(x), x0, 10)
        assert np.array_equal(out, x0)

    def test_state_dependent_field_vs_fine_oracle(self, rng):
        # the update x <- x - dtau * x contracts by (1 - dtau) per step,
        # so the exact flow is x0 * exp(-1) over the unit interval
        x0 = rng.standard_normal((2, 2))
        fine = flowmatch.euler_integrate(lambda x, tau: x, x0, 10_000)
        assert np.abs(fine - x0 * np.exp(-1.0)).max() < 1e-3
        coarse = flowmatch.euler_integrate(lambda x, tau: x, x0, 10)
        expected_err = abs((1 - 0.1) ** 10 - np.exp(-1.0)) * np.abs(x0).max()
        assert np.abs(coarse - fine).max() <= expected_err * 1.2

    def test_first_order_convergence(self, rng):
        # error vs the fine oracle shrinks linearly in step size (slope 1 +- 0.2)
        x0 = rng.standard_normal((3, 2))
        field = lambda x, tau: np.sin(x) + tau
        fine = flowmatch.euler_integrate(field, x0, 200_000)
        steps = np.array([10, 20, 40, 80])
        errs = [np.abs(flowmatch.euler_integrate(field, x0, int(s)) - fine).max() for s in steps]
        slope = np.polyfit(np.log(1.0 / steps), np.log(errs), 1)[0]
        assert 0.8 <= slope <= 1.2

    def test_default_steps_is_ten(self):
        assert flowmatch.DEFAULT_INFERENCE_STEPS == 10
        calls = []

        def counting(x, tau):
            calls.append(tau)
            return np.zeros_like(x)

        flowmatch.euler_integrate(counting, np.zeros((1, 1)))
        assert len(calls) == 10
        assert calls[0] == 1.0  # integration starts at tau = 1

    def test_tau_grid_descends_to_zero(self):
        taus = []

        def record(x, tau):
            taus.append(round(tau, 12))
            return np.zeros_like(x)

        flowmatch.euler_integrate(record, np.zeros((1, 1)), 4)
        assert taus == [1.0, 0.75, 0.5, 0.25]

    def test_contract_violation(self):
        with pytest.raises(ContractViolationError):
            flowmatch.euler_integrate(lambda x, tau: np.zeros((2, 9)), np.zeros((2, 2)), 5)

    def test_bad_steps(self):
        with pytest.raises(InvalidArgumentError):
            flowmatch.euler_integrate(lambda x, tau: x, np.zeros((1, 1)), 0)


class TestCotrainBatch:
    def test_32_splits_16_16(self, rng):
        batch = flowmatch.compose_cotrain_batch(list(range(100)), list(range(100)), 32, rng)
        assert len(batch.human_items) == 16
        assert len(batch.robot_items) == 16
        assert batch.size == 32

    def test_singleton_pools(self, rng):
        batch = flowmatch.compose_cotrain_batch(["h"], ["r"], 2, rng)
        assert batch.human_items == ("h",)
        assert batch.robot_items == ("r",)

    def test_odd_batch_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            flowmatch.compose_cotrain_batch([1], [2], 31, rng)

    def test_empty_pool_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            flowmatch.compose_cotrain_batch([], [1], 2, rng)

    def test_deterministic_under_seed(self):
        pool_h, pool_r = list(range(50)), list(range(40))
        a = flowmatch.compose_cotrain_batch(pool_h, pool_r, 16, np.random.default_rng(5))
        b = flowmatch.compose_cotrain_batch(pool_h, pool_r, 16, np.random.default_rng(5))
        assert a == b

    def test_unequal_halves_rejected(self):
        with pytest.raises(InvariantViolationError):
            flowmatch.CotrainBatch((1, 2), (3,))

    def test_sampling_uniform_within_3_sigma(self):
        # 10^5 batches of size 2: each item's pick count stays within 3 sigma
        rng = np.random.default_rng(17)
        m = 10
        pool = list(range(m))
        trials = 100_000
        counts_h = np.zeros(m)
        counts_r = np.zeros(m)
        for _ in range(trials):
            batch = flowmatch.compose_cotrain_batch(pool, pool, 2, rng)
            counts_h[batch.human_items[0]] += 1
            counts_r[batch.robot_items[0]] += 1
        expected = trials / m
        sigma = np.sqrt(trials * (1 / m) * (1 - 1 / m))
        assert np.all(np.abs(counts_h - expected) <= 3 * sigma)
        assert np.all(np.abs(counts_r - expected) <= 3 * sigma)


class TestSelftestHarness:
    def test_healthy_suite_passes(self):
        assert run_flowmatch_selftest() == []

    def test_sign_flipped_euler_caught(self):
        def flipped(velocity_fn, x_init, steps=10):
            x = np.array(x_init, dtype=np.float64)
            dtau = 1.0 / steps
            for k in range(steps):
                x = x + dtau * velocity_fn(x, 1.0 - k * dtau)  # wrong sign
            return x

        failures = run_flowmatch_selftest(euler_fn=flipped)
        assert failures
