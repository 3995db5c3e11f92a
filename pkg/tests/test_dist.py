"""Mixture oracles: sampling, smoothed density, and score."""

import math

import numpy as np
import pytest

from score_forge.dist import (
    GaussianMixture,
    SmoothedOracle,
    forward_perturb,
    mixture_from_dict,
    mixture_to_dict,
    standard_normal,
    symmetric_pair,
)


class TestSampling:
    def test_standard_normal_moments(self):
        x = standard_normal(1).sample(100_000, seed=11)
        assert abs(x.mean()) < 0.02
        assert abs(x.var() - 1.0) < 0.02

    def test_degenerate_component_collapses(self):
        mix = GaussianMixture(1, [1.0], np.zeros((1, 1)), [1e-12])
        x = mix.sample(1000, seed=0)
        assert np.all(np.abs(x) < 1e-5)

    def test_symmetric_pair_mean(self):
        x = symmetric_pair(3.0).sample(100_000, seed=4)
        assert abs(x.mean()) < 0.05

    def test_deterministic_given_seed(self):
        mix = symmetric_pair(2.0, dim=3)
        assert np.array_equal(mix.sample(50, seed=9), mix.sample(50, seed=9))

    def test_count_validation(self):
        with pytest.raises(ValueError):
            standard_normal().sample(0, seed=1)


class TestForwardPerturb:
    def test_zero_time_is_identity(self):
        x = np.arange(12.0).reshape(4, 3)
        assert forward_perturb(x, 0.0, seed=1) is x

    def test_variance_adds(self):
        x = standard_normal(1).sample(100_000, seed=2)
        y = forward_perturb(x, 3.0, seed=3)
        assert abs(y.var() - 4.0) < 0.1

    def test_reproducible(self):
        x = np.zeros((1, 2))
        assert np.array_equal(forward_perturb(x, 1.0, seed=5), forward_perturb(x, 1.0, seed=5))

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            forward_perturb(np.zeros((1, 1)), -0.1, seed=0)


class TestOracleDensity:
    def test_smoothed_standard_normal_at_origin(self):
        oracle = SmoothedOracle(standard_normal(1), 1.0)
        assert oracle.density(np.zeros(1)) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-12)

    def test_strictly_positive(self):
        oracle = SmoothedOracle(symmetric_pair(3.0), 0.2)
        xs = np.random.default_rng(0).uniform(-30, 30, size=(200, 1))
        assert np.all(oracle.density(xs) > 0)

    def test_reflection_symmetry(self):
        oracle = SmoothedOracle(symmetric_pair(3.0), 0.0)
        x = np.array([1.234])
        assert oracle.density(x) == pytest.approx(oracle.density(-x), rel=1e-14)

    def test_integrates_to_one(self):
        mix = GaussianMixture(1, [0.3, 0.7], [[-2.0], [1.5]], [0.5, 2.0])
        for t in (0.0, 0.7):
            oracle = SmoothedOracle(mix, t)
            reach = 2.0 + 8.0 * math.sqrt(2.0 + t)
            xs = np.linspace(-reach, reach, 40_001)[:, None]
            mass = np.trapezoid(oracle.density(xs), xs[:, 0])
            assert abs(mass - 1.0) < 1e-6


class TestOracleScore:
    def test_gaussian_score_closed_form(self):
        oracle = SmoothedOracle(standard_normal(1), 1.0)
        assert oracle.score(np.array([3.0]))[0] == pytest.approx(-1.5, rel=1e-12)

    def test_symmetry_zero_at_center(self):
        oracle = SmoothedOracle(symmetric_pair(3.0), 0.4)
        assert oracle.score(np.zeros(1))[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_log_density_gradient(self):
        mix = GaussianMixture(
            2, [0.2, 0.5, 0.3], [[-3.0, 0.0], [0.5, 1.0], [2.0, -2.0]], [0.4, 1.0, 2.5]
        )
        oracle = SmoothedOracle(mix, 0.3)
        rng = np.random.default_rng(8)
        xs = rng.uniform(-4, 4, size=(200, 2))
        step = 1e-5
        fd = np.empty_like(xs)
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            fd[:, j] = (oracle.log_density(xs + e) - oracle.log_density(xs - e)) / (2 * step)
        exact = oracle.score(xs)
        denom = np.maximum(np.abs(exact), 1e-3)
        assert np.max(np.abs(fd - exact) / denom) < 1e-5

    def test_gradient_is_density_times_score(self):
        oracle = SmoothedOracle(symmetric_pair(2.0, dim=2), 0.5)
        x = np.array([0.7, -0.2])
        expected = oracle.density(x) * oracle.score(x)
        assert oracle.gradient(x) == pytest.approx(expected, rel=1e-12)

    def test_second_moment_of_score_bounded(self):
        # E |score_t(X_t)|^2 <= d/t for any base distribution
        mix = symmetric_pair(3.0)
        t = 0.5
        oracle = SmoothedOracle(mix, t)
        x = oracle.sample(1_000_000, seed=21)
        second = float(np.mean(np.sum(oracle.score(x) ** 2, axis=1)))
        assert second <= (mix.dim / t) * 1.05


class TestSemigroup:
    def test_prior_smoothing_composes_exactly(self):
        # dyadic times keep variance addition associative in floating point
        mix = GaussianMixture(1, [0.4, 0.6], [[-1.0], [2.0]], [0.5, 1.25])
        t1, t2 = 0.25, 0.5
        direct = SmoothedOracle(mix, t1 + t2)
        staged = SmoothedOracle(mix.smoothed(t1), t2)
        xs = np.linspace(-6, 8, 101)[:, None]
        assert np.array_equal(direct.density(xs), staged.density(xs))


class TestValidationAndConfig:
    def test_weights_must_normalize(self):
        with pytest.raises(ValueError):
            GaussianMixture(1, [0.5, 0.4], [[0.0], [1.0]], [1.0, 1.0])

    def test_variances_positive(self):
        with pytest.raises(ValueError):
            GaussianMixture(1, [1.0], [[0.0]], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            GaussianMixture(2, [1.0], [[0.0]], [1.0])

    def test_sub_gaussian_proxy(self):
        mix = symmetric_pair(3.0, variance=4.0)
        assert mix.sub_gaussian_proxy == pytest.approx(5.0)

    def test_dict_round_trip(self):
        mix = GaussianMixture(2, [0.25, 0.75], [[0.0, 1.0], [-2.0, 0.5]], [1.0, 0.3])
        assert mixture_from_dict(mixture_to_dict(mix)) == mix

    def test_dict_accepts_scalar_means_for_1d(self):
        mix = mixture_from_dict(
            {"dim": 1, "weights": [0.5, 0.5], "means": [-3.0, 3.0], "variances": [1.0, 1.0]}
        )
        assert mix == symmetric_pair(3.0)

    def test_dict_rejects_unknown_and_missing_fields(self):
        with pytest.raises(ValueError, match="unknown"):
            mixture_from_dict(
                {"dim": 1, "weights": [1.0], "means": [[0.0]], "variances": [1.0], "name": "x"}
            )
        with pytest.raises(ValueError, match="missing"):
            mixture_from_dict({"dim": 1, "weights": [1.0], "means": [[0.0]]})
