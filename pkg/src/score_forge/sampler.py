"""Reverse-SDE sampling driven by a pluggable score field.

The generative process integrates

    dY = s(Y, T - tau) dtau + dB,   Y_0 ~ N(0, T*I),

by Euler-Maruyama on a grid of integration times tau_k, stopping at
tau = T - t0 so the output targets the t0-smoothed data distribution.
The default grid is geometric in remaining diffusion time (score
magnitudes grow like t^{-1/2} toward t0, so equal ratios spend the step
budget where it matters); a uniform grid is kept for ablation.

Score fields are deterministic callables (points, time) -> drift batch
and must be safe for concurrent read-only use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import child_seed, rng_for
from .dist import GaussianMixture
from .estimator import EstimatorConfig, ScoreEstimator, default_config
from .kernel import build_kernel

SCHEDULES = ("uniform", "geometric")


@dataclass(frozen=True)
class SamplerConfig:
    T: float
    t0: float
    steps: int
    schedule: str = "geometric"
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.t0 < self.T):
            raise ValueError("need 0 < t0 < T")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


def time_grid(cfg: SamplerConfig) -> np.ndarray:
    """Diffusion times s_k = T - tau_k, from T down to t0 (steps+1 values).

    The geometric grid shrinks the remaining time by a constant ratio per
    step; doubling ``steps`` yields a superset of the coarser grid.
    """
    k = np.arange(cfg.steps + 1) / cfg.steps
    if cfg.schedule == "geometric":
        return cfg.T * (cfg.t0 / cfg.T) ** k
    return cfg.T - (cfg.T - cfg.t0) * k


class OracleScoreField:
    """Exact score of the smoothed mixture, for ground-truth sampling."""

    def __init__(self, mixture: GaussianMixture):
        self.mixture = mixture
        self.dim = mixture.dim

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.mixture.smoothed(t).score(x)


class ZeroScoreField:
    """Zero drift; the reverse process degenerates to pure Brownian motion."""

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros_like(x)


class KernelScoreBank:
    """Truncated-kernel score fields built per query time from training data.

    Each distinct time t gets its own estimator, fitted to an independently
    perturbed copy of the training sample (X_i + sqrt(t) Z_i with fresh Z
    per time, keyed by the bit pattern of t). Only the most recent
    estimator is cached: samplers and time integrals visit times
    sequentially, and a full bank would hold hundreds of copies of the data.
    """

    def __init__(self, samples0: np.ndarray, seed, C: float = 1.0, order: int | None = None):
        self.samples0 = np.ascontiguousarray(samples0, dtype=np.float64)
        if self.samples0.ndim != 2:
            raise ValueError("training samples must be an (n, d) matrix")
        self.seed = seed
        self.C = C
        self.order = order
        self.dim = self.samples0.shape[1]
        self._kernel_cache: dict[int, object] = {}
        self._current: tuple[float, ScoreEstimator] | None = None

    def config_for(self, t: float) -> EstimatorConfig:
        cfg = default_config(n=len(self.samples0), t=t, d=self.dim, C=self.C)
        if self.order is not None:
            cfg = EstimatorConfig(
                n=cfg.n, d=cfg.d, t=cfg.t, h=cfg.h, ell=self.order,
                rho=cfg.rho, bandwidth_scale=cfg.bandwidth_scale,
            )
        return cfg

    def for_time(self, t: float) -> ScoreEstimator:
        if self._current is not None and self._current[0] == t:
            return self._current[1]
        cfg = self.config_for(t)
        noise = rng_for(child_seed(self.seed, "bank-perturb", float(t))).standard_normal(
            self.samples0.shape
        )
        data_t = self.samples0 + math.sqrt(t) * noise
        if cfg.ell not in self._kernel_cache:
            self._kernel_cache[cfg.ell] = build_kernel(cfg.ell)
        est = ScoreEstimator(data_t, cfg, kernel=self._kernel_cache[cfg.ell])
        self._current = (t, est)
        return est

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.for_time(t).score(x)


def reverse_sample(
    score,
    cfg: SamplerConfig,
    count: int,
    increments: np.ndarray | None = None,
    stop_time: float | None = None,
) -> np.ndarray:
    """Generate ``count`` samples by integrating the reverse SDE.

    Per step: Y += dt * score(Y, s_k) + dB_k, with dB_k ~ N(0, dt*I) drawn
    from a per-step child stream of cfg.seed (so a shorter run over a grid
    prefix reproduces the longer run's intermediate state exactly).

    ``increments`` optionally supplies the Brownian increments dB_k as an
    array of shape (steps, count, dim) -- used for common-random-number
    comparisons across schedules.

    ``stop_time`` returns the state at the first grid point whose
    diffusion time is <= stop_time (it should itself be a grid time).

    Raises RuntimeError with the offending step index when the state stops
    being finite (score blow-up or a grid too coarse for it).
    """
    d = score.dim
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = time_grid(cfg)
    if increments is not None:
        increments = np.asarray(increments, dtype=np.float64)
        if increments.shape != (cfg.steps, count, d):
            raise ValueError(f"increments must have shape {(cfg.steps, count, d)}")
    y = rng_for(child_seed(cfg.seed, "init")).standard_normal((count, d)) * math.sqrt(cfg.T)
    for k in range(cfg.steps):
        s_k = grid[k]
        dt = grid[k] - grid[k + 1]
        drift = score(y, s_k)
        if increments is not None:
            db = increments[k]
        else:
            db = math.sqrt(dt) * rng_for(child_seed(cfg.seed, "step", k)).standard_normal((count, d))
        y = y + dt * drift + db
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y).all(axis=1))[0])
            raise RuntimeError(
                f"non-finite state at step {k} (diffusion time {grid[k + 1]:.6g}, "
                f"trajectory {bad}); the score may blow up or the grid is too coarse"
            )
        if stop_time is not None and grid[k + 1] <= stop_time * (1 + 1e-12):
            return y
    return y


def ou_to_bm_time(s: float) -> float:
    """Map an Ornstein-Uhlenbeck time to the equivalent Brownian time e^{2s} - 1."""
    if s < 0:
        raise ValueError("time must be nonnegative")
    return math.expm1(2.0 * s)


def bm_to_ou_time(t: float) -> float:
    """Inverse map: s = ln(1 + t) / 2."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    return 0.5 * math.log1p(t)


def scale_ou_sample(x: np.ndarray, s: float) -> np.ndarray:
    """Rescale an OU state at time s to its Brownian-process equivalent e^s x."""
    if s < 0:
        raise ValueError("time must be nonnegative")
    return np.asarray(x, dtype=np.float64) * math.exp(s)
