"""Reference distributions with exact smoothed-density and score oracles.

Isotropic Gaussian mixtures are closed under Gaussian smoothing: convolving
with N(0, t*I) just adds t to every component variance. That gives exact
formulas for the smoothed density p_t, its gradient, and the score
grad log p_t at every time t, which the estimator and sampler tests are
measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_for

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Isotropic Gaussian mixture sum_k w_k N(mu_k, var_k * I) in R^d."""

    dim: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, GaussianMixture):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if w.ndim != 1 or mu.shape != (len(w), self.dim) or var.shape != (len(w),):
            raise ValueError("weights, means and variances have inconsistent shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(var <= 0):
            raise ValueError("component variances must be positive")
        for a in (w, mu, var):
            a.setflags(write=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def sub_gaussian_proxy(self) -> float:
        """max_k (|mu_k| + sigma_k), a crude scale for tail extent."""
        return float(np.max(np.linalg.norm(self.means, axis=1) + np.sqrt(self.variances)))

    def smoothed(self, t: float) -> "GaussianMixture":
        """The mixture convolved with N(0, t*I): variances shift by t."""
        if t < 0:
            raise ValueError("smoothing time must be nonnegative")
        return GaussianMixture(self.dim, self.weights, self.means, self.variances + t)

    def sample(self, count: int, seed) -> np.ndarray:
        """(count, dim) i.i.d. draws; deterministic given the seed."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = rng_for(seed)
        comp = rng.choice(self.n_components, size=count, p=self.weights)
        z = rng.standard_normal((count, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * z

    def _log_terms(self, x: np.ndarray) -> np.ndarray:
        """log(w_k) + log N(x; mu_k, var_k I), shape (..., K)."""
        diff = x[..., None, :] - self.means  # (..., K, d)
        sq = np.sum(diff * diff, axis=-1)
        return (
            np.log(self.weights)
            - 0.5 * sq / self.variances
            - 0.5 * self.dim * np.log(2.0 * math.pi * self.variances)
        )

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 1
        terms = self._log_terms(np.atleast_2d(x))
        m = terms.max(axis=-1, keepdims=True)
        out = (m + np.log(np.sum(np.exp(terms - m), axis=-1, keepdims=True)))[..., 0]
        return float(out[0]) if scalar else out

    def density(self, x):
        out = np.exp(self.log_density(x))
        return float(out) if np.ndim(out) == 0 else out

    def responsibilities(self, x) -> np.ndarray:
        """Posterior component probabilities at x, computed in log space."""
        terms = self._log_terms(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        m = terms.max(axis=-1, keepdims=True)
        e = np.exp(terms - m)
        return e / e.sum(axis=-1, keepdims=True)

    def score(self, x):
        """grad log density; for a mixture a responsibility blend of (mu_k - x)/var_k."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 1
        pts = np.atleast_2d(x)
        resp = self.responsibilities(pts)
        pull = (self.means - pts[..., None, :]) / self.variances[:, None]
        out = np.sum(resp[..., None] * pull, axis=-2)
        return out[0] if scalar else out

    def gradient(self, x):
        """grad of the density itself: p(x) * score(x)."""
        dens = np.asarray(self.density(x))
        return dens[..., None] * self.score(x)


def standard_normal(dim: int = 1) -> GaussianMixture:
    return GaussianMixture(dim, [1.0], np.zeros((1, dim)), [1.0])


def symmetric_pair(offset: float = 3.0, variance: float = 1.0, dim: int = 1) -> GaussianMixture:
    """Equal-weight two-component mixture at +-offset along the first axis."""
    mu = np.zeros((2, dim))
    mu[0, 0] = -offset
    mu[1, 0] = offset
    return GaussianMixture(dim, [0.5, 0.5], mu, [variance, variance])


def forward_perturb(samples: np.ndarray, t: float, seed) -> np.ndarray:
    """Diffuse samples to time t by adding independent N(0, t*I) noise per row.

    t = 0 returns the input unchanged (same object, no copy).
    """
    if t < 0:
        raise ValueError("diffusion time must be nonnegative")
    if t == 0:
        return samples
    samples = np.asarray(samples, dtype=np.float64)
    return samples + math.sqrt(t) * rng_for(seed).standard_normal(samples.shape)


@dataclass(frozen=True, eq=False)
class SmoothedOracle:
    """Exact density/score access for p_t = p_0 * N(0, t*I).

    Wraps the base mixture with its time-t smoothed version; all queries
    are closed form. Instances are immutable and safe to share.
    """

    base: GaussianMixture
    time: float
    mixture: GaussianMixture = field(init=False, repr=False)

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        object.__setattr__(self, "mixture", self.base.smoothed(self.time))

    def density(self, x):
        return self.mixture.density(x)

    def log_density(self, x):
        return self.mixture.log_density(x)

    def gradient(self, x):
        return self.mixture.gradient(x)

    def score(self, x):
        return self.mixture.score(x)

    def sample(self, count: int, seed) -> np.ndarray:
        """Draws from p_t (equivalent in law to perturbing base draws)."""
        return self.mixture.sample(count, seed)


def mixture_from_dict(obj: dict) -> GaussianMixture:
    """Build a mixture from the JSON config fields weights/means/variances/dim."""
    missing = {"weights", "means", "variances", "dim"} - set(obj)
    if missing:
        raise ValueError(f"mixture config missing fields: {sorted(missing)}")
    extra = set(obj) - {"weights", "means", "variances", "dim"}
    if extra:
        raise ValueError(f"mixture config has unknown fields: {sorted(extra)}")
    dim = int(obj["dim"])
    means = [[m] if np.ndim(m) == 0 else list(m) for m in obj["means"]]
    return GaussianMixture(dim, obj["weights"], np.asarray(means, dtype=np.float64), obj["variances"])


def mixture_to_dict(mix: GaussianMixture) -> dict:
    return {
        "dim": mix.dim,
        "weights": [float(w) for w in mix.weights],
        "means": [[float(v) for v in row] for row in mix.means],
        "variances": [float(v) for v in mix.variances],
    }
