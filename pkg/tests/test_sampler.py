"""Reverse-SDE sampler: laws, determinism, schedules, time maps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from score_forge._rng import child_seed, rng_for
from score_forge.dist import standard_normal, symmetric_pair
from score_forge.sampler import (
    KernelScoreBank,
    OracleScoreField,
    SamplerConfig,
    ZeroScoreField,
    bm_to_ou_time,
    ou_to_bm_time,
    reverse_sample,
    scale_ou_sample,
    time_grid,
)


class TestTimeGrid:
    def test_geometric_endpoints_and_constant_ratio(self):
        cfg = SamplerConfig(T=16.0, t0=0.01, steps=40, schedule="geometric", seed=0)
        s = time_grid(cfg)
        assert s[0] == pytest.approx(16.0)
        assert s[-1] == pytest.approx(0.01)
        ratios = s[1:] / s[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-12)

    def test_uniform_spacing(self):
        cfg = SamplerConfig(T=4.0, t0=1.0, steps=6, schedule="uniform", seed=0)
        s = time_grid(cfg)
        assert np.allclose(np.diff(s), -0.5, rtol=1e-12)

    def test_doubling_nests(self):
        coarse = time_grid(SamplerConfig(T=8.0, t0=0.05, steps=25, seed=0))
        fine = time_grid(SamplerConfig(T=8.0, t0=0.05, steps=50, seed=0))
        np.testing.assert_allclose(fine[::2], coarse, rtol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(T=1.0, t0=1.5, steps=10)
        with pytest.raises(ValueError):
            SamplerConfig(T=1.0, t0=0.1, steps=0)
        with pytest.raises(ValueError):
            SamplerConfig(T=1.0, t0=0.1, steps=10, schedule="adaptive")


class TestReverseSample:
    def test_zero_drift_adds_brownian_variance(self):
        cfg = SamplerConfig(T=4.0, t0=0.01, steps=30, schedule="uniform", seed=3)
        y = reverse_sample(ZeroScoreField(1), cfg, 30_000)
        assert y.var() == pytest.approx(2 * 4.0 - 0.01, rel=0.04)

    def test_oracle_gaussian_hits_smoothed_law(self):
        cfg = SamplerConfig(T=16.0, t0=0.01, steps=400, schedule="geometric", seed=9)
        y = reverse_sample(OracleScoreField(standard_normal(1)), cfg, 100_000)
        assert abs(y.mean()) < 0.02
        assert abs(y.var() - 1.01) < 0.03

    def test_bitwise_deterministic(self):
        cfg = SamplerConfig(T=2.0, t0=0.05, steps=20, seed=42)
        field = OracleScoreField(symmetric_pair(2.0))
        assert np.array_equal(reverse_sample(field, cfg, 500), reverse_sample(field, cfg, 500))

    def test_early_stop_returns_true_intermediate_state(self):
        cfg = SamplerConfig(T=8.0, t0=0.02, steps=12, seed=5)
        field = OracleScoreField(standard_normal(1))
        grid = time_grid(cfg)
        k = 5
        partial = reverse_sample(field, cfg, 64, stop_time=float(grid[k]))
        # finish the remaining steps by hand with the sampler's own streams
        y = partial.copy()
        for j in range(k, cfg.steps):
            dt = grid[j] - grid[j + 1]
            drift = field(y, grid[j])
            db = math.sqrt(dt) * rng_for(child_seed(cfg.seed, "step", j)).standard_normal(y.shape)
            y = y + dt * drift + db
        full = reverse_sample(field, cfg, 64)
        assert np.array_equal(y, full)

    def test_nonfinite_state_reports_step(self):
        class Exploding:
            dim = 1

            def __call__(self, x, t):
                return np.full_like(x, np.inf) if t < 1.0 else np.zeros_like(x)

        cfg = SamplerConfig(T=4.0, t0=0.01, steps=16, seed=1)
        with pytest.raises(RuntimeError, match="step"):
            reverse_sample(Exploding(), cfg, 8)

    def test_increments_shape_checked(self):
        cfg = SamplerConfig(T=2.0, t0=0.1, steps=5, seed=0)
        with pytest.raises(ValueError):
            reverse_sample(ZeroScoreField(1), cfg, 10, increments=np.zeros((4, 10, 1)))

    def test_refinement_decreases_discretization_error(self):
        """With a common Brownian path, halving the step size moves the
        sample variance monotonically toward the target law."""
        T, t0, count = 64.0, 0.01, 80_000
        field = OracleScoreField(standard_normal(1))
        steps_fine = 800
        fine_grid = time_grid(SamplerConfig(T=T, t0=t0, steps=steps_fine, seed=0))
        rng = np.random.default_rng(2024)
        xi = rng.standard_normal((steps_fine, count, 1)).astype(np.float32)
        fine_inc = (np.sqrt(-np.diff(fine_grid)).astype(np.float32)[:, None, None] * xi)
        proxies = []
        for steps in (50, 100, 200, 400, 800):
            stride = steps_fine // steps
            inc = fine_inc.reshape(steps, stride, count, 1).sum(axis=1, dtype=np.float64)
            cfg = SamplerConfig(T=T, t0=t0, steps=steps, seed=7)
            y = reverse_sample(field, cfg, count, increments=inc)
            proxies.append(abs(y.var() - (1 + t0)))
        assert all(a >= b for a, b in zip(proxies, proxies[1:])), proxies


class TestKernelScoreBank:
    def test_uses_default_config(self):
        bank = KernelScoreBank(np.zeros((1000, 1)), seed=1, C=1.5)
        cfg = bank.config_for(0.25)
        assert cfg.h == pytest.approx(1.5 * math.sqrt(0.25 / math.log(1000)))
        assert cfg.ell == 7
        assert cfg.rho == pytest.approx(1.0 / (1000 * 0.5))

    def test_order_override(self):
        bank = KernelScoreBank(np.zeros((1000, 1)), seed=1, order=2)
        assert bank.config_for(0.25).ell == 2

    def test_deterministic_per_time(self):
        data = standard_normal(1).sample(500, seed=3)
        q = np.linspace(-1, 1, 9)[:, None]
        a = KernelScoreBank(data, seed=11)(q, 0.5)
        b = KernelScoreBank(data, seed=11)(q, 0.5)
        assert np.array_equal(a, b)

    def test_distinct_noise_across_times(self):
        data = standard_normal(1).sample(500, seed=3)
        bank = KernelScoreBank(data, seed=11)
        e1 = bank.for_time(0.5)
        e2 = bank.for_time(0.5000001)
        assert not np.array_equal(e1._data, e2._data)


class TestTimeChange:
    def test_zero_maps_to_zero(self):
        assert ou_to_bm_time(0.0) == 0.0

    def test_unit_ou_time(self):
        assert bm_to_ou_time(math.exp(2) - 1) == pytest.approx(1.0, rel=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 50.0, allow_nan=False))
    def test_round_trip(self, s):
        assert bm_to_ou_time(ou_to_bm_time(s)) == pytest.approx(s, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ou_to_bm_time(-0.1)
        with pytest.raises(ValueError):
            bm_to_ou_time(-0.1)

    def test_scaling_examples(self):
        x = np.array([1.0, -2.0])
        assert np.array_equal(scale_ou_sample(x, 0.0), x)
        np.testing.assert_allclose(scale_ou_sample(x, math.log(2)), 2 * x, rtol=1e-15)

    def test_ou_and_bm_laws_match_under_the_map(self):
        # exact OU solution at time s, scaled by e^s, matches the Brownian
        # marginal at t = e^{2s} - 1 in law
        s = 0.6
        t = ou_to_bm_time(s)
        x0 = standard_normal(1).sample(100_000, seed=8)
        z = rng_for(child_seed(8, "z")).standard_normal(x0.shape)
        ou = math.exp(-s) * x0 + math.sqrt(1 - math.exp(-2 * s)) * z
        bm = x0 + math.sqrt(t) * z
        assert scale_ou_sample(ou, s).var() == pytest.approx(bm.var(), rel=0.02)
        assert scale_ou_sample(ou, s).var() == pytest.approx(1 + t, rel=0.02)
