"""Kernel density estimation of the smoothed density and its gradient,
plus the truncated score estimator.

Given samples X_1..X_n from the time-t smoothed distribution, the density
estimate at x is

    (1 / (n h^d)) * sum_i K_d((x - X_i) / h)

with the product kernel from ``kernel``; the gradient estimate carries an
extra 1/h. The score estimate is their ratio, forced to zero wherever the
density estimate falls below the threshold ``rho`` (including everywhere
the higher-order kernel makes it negative).

Queries run through a uniform bucket grid with cell side h (supported for
d <= 4; larger d falls back to a linear scan), so each query touches only
the points that can actually contribute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _fast
from .kernel import KernelSpec, ProductKernel, build_kernel

_GRID_MAX_DIM = 4
_FLAT_ID_LIMIT = 1 << 62


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator hyperparameters.

    ``bandwidth_scale`` is the constant C in the default bandwidth
    h = C * sqrt(t / ln n); it is kept alongside the resolved h so that
    configs remain self-describing.
    """

    n: int
    d: int
    t: float
    h: float
    ell: int
    rho: float
    bandwidth_scale: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not (self.h > 0):
            raise ValueError("bandwidth h must be positive")
        if not (self.rho > 0):
            raise ValueError("truncation threshold rho must be positive")
        if self.ell < 1:
            raise ValueError("kernel order ell must be >= 1")


def default_config(n: int, t: float, d: int, C: float = 1.0) -> EstimatorConfig:
    """Config with h = C sqrt(t / ln n), ell = ceil(ln n), rho = 1/(n t^{d/2})."""
    if n < 3:
        raise ValueError("need n >= 3 so that ln n > 1")
    if not (t > 0):
        raise ValueError("diffusion time t must be positive")
    if not (C > 0):
        raise ValueError("bandwidth scale C must be positive")
    log_n = math.log(n)
    return EstimatorConfig(
        n=n,
        d=d,
        t=t,
        h=C * math.sqrt(t / log_n),
        ell=math.ceil(log_n),
        rho=1.0 / (n * t ** (d / 2.0)),
        bandwidth_scale=C,
    )


class ScoreEstimator:
    """Immutable bound state of (data, kernel, config) answering point queries.

    Safe for concurrent read-only use from multiple threads.
    """

    def __init__(self, data: np.ndarray, config: EstimatorConfig, kernel: KernelSpec | None = None):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape != (config.n, config.d):
            raise ValueError(f"data must have shape ({config.n}, {config.d}), got {data.shape}")
        self.config = config
        spec = kernel if kernel is not None else build_kernel(config.ell)
        if spec.order != config.ell:
            raise ValueError("kernel order does not match config.ell")
        self.kernel = ProductKernel(spec, config.d)
        self._dco = np.append(spec.dcoeffs, 0.0)  # pad to icoeffs length
        self._ico = spec.icoeffs
        self._ra, self._rb = _fast.recurrence_factors(len(self._ico) - 1)
        self._build_index(data)

    def _build_index(self, data: np.ndarray) -> None:
        n, d = data.shape
        h = self.config.h
        mins = data.min(axis=0)
        cells = np.floor((data - mins) / h).astype(np.int64)
        dims = cells.max(axis=0) + 1
        use_grid = d <= _GRID_MAX_DIM and math.prod(int(v) for v in dims) < _FLAT_ID_LIMIT
        if use_grid:
            strides = np.ones(d, dtype=np.int64)
            for j in range(d - 2, -1, -1):
                strides[j] = strides[j + 1] * dims[j + 1]
            flat = cells @ strides
            order = np.argsort(flat, kind="stable")
            occ, first = np.unique(flat[order], return_index=True)
            self._data = np.ascontiguousarray(data[order])
            self._occ = occ
            self._starts = np.append(first, n).astype(np.int64)
            self._dims = dims
            self._strides = strides
            self._mins = mins
        else:
            self._data = data
            self._occ = None
        self._1d = use_grid and d == 1

    def _query(self, pts: np.ndarray):
        out_v = np.empty(len(pts))
        out_g = np.empty((len(pts), self.config.d))
        args = (self._dco, self._ico, self._ra, self._rb, out_v, out_g)
        with _fast.EXEC_LOCK:
            if self._occ is None:
                _fast.query_linear(pts, self._data, self.config.h, *args)
            elif self._1d:
                _fast.query_grid_1d(
                    pts, self._data, self._occ, self._starts,
                    self._dims[0], self._mins[0], self.config.h, *args,
                )
            else:
                _fast.query_grid_nd(
                    pts, self._data, self._occ, self._starts,
                    self._dims, self._strides, self._mins, self.config.h, *args,
                )
        cfg = self.config
        scale = 1.0 / (cfg.n * cfg.h**cfg.d)
        return out_v * scale, out_g * (scale / cfg.h)

    def _as_batch(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.config.d:
            raise ValueError(f"query dimension {pts.shape[1]} != {self.config.d}")
        return pts, single

    def density(self, x):
        """KDE of p_t at x; may be negative for kernel orders above 2."""
        pts, single = self._as_batch(x)
        vals, _ = self._query(pts)
        return float(vals[0]) if single else vals

    def gradient(self, x):
        """KDE of grad p_t at x; the zero vector when no sample is in range."""
        pts, single = self._as_batch(x)
        _, grads = self._query(pts)
        return grads[0] if single else grads

    def score(self, x):
        """Truncated score: gradient/density where density >= rho, else 0.

        The threshold is inclusive (an estimate exactly at rho is kept);
        negative density estimates always truncate.
        """
        pts, single = self._as_batch(x)
        vals, grads = self._query(pts)
        keep = vals >= self.config.rho
        safe = np.where(keep, vals, 1.0)
        out = np.where(keep[:, None], grads / safe[:, None], 0.0)
        return out[0] if single else out

    def density_and_score(self, x):
        """(density, truncated score) in one pass over the index."""
        pts, single = self._as_batch(x)
        vals, grads = self._query(pts)
        keep = vals >= self.config.rho
        safe = np.where(keep, vals, 1.0)
        scores = np.where(keep[:, None], grads / safe[:, None], 0.0)
        if single:
            return float(vals[0]), scores[0]
        return vals, scores


def fit(samples_t: np.ndarray, config: EstimatorConfig | None = None, **default_kwargs) -> ScoreEstimator:
    """Convenience constructor; derives the default config from the data shape."""
    if config is None:
        n, d = np.asarray(samples_t).shape
        config = default_config(n=n, d=d, **default_kwargs)
    return ScoreEstimator(samples_t, config)


def with_order(config: EstimatorConfig, ell: int) -> EstimatorConfig:
    """Copy of config with a different kernel order (bandwidth untouched)."""
    return replace(config, ell=ell)
