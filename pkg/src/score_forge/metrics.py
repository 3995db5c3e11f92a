"""Error measurement: weighted score MSE, total-variation distances, and
log-log rate fitting.

The weighted MSE integral E_{X ~ p_t} |shat_t(X) - s_t(X)|^2 is estimated
by Monte Carlo with X drawn from the smoothed oracle itself, which keeps
the estimate unbiased in any dimension. Total variation is computed by
deterministic Simpson quadrature and is restricted to d = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import child_seed, rng_for
from .dist import GaussianMixture, SmoothedOracle
from .estimator import EstimatorConfig, ScoreEstimator, default_config

_TAIL_TOL = 1e-4


@dataclass(frozen=True)
class RatePoint:
    """One measured cell of a rate experiment: error y at abscissa x."""

    x: float
    y: float
    stderr: float
    seed: int

    def __post_init__(self):
        if not (self.x > 0):
            raise ValueError("abscissa must be positive")
        if self.y < 0:
            raise ValueError("measured error must be nonnegative")


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def score_mse(score, oracle: SmoothedOracle, t: float, mc: int, seed) -> tuple[float, float]:
    """Monte Carlo estimate (value, stderr) of the p_t-weighted score MSE.

    ``score`` is any (points, t) -> drift callable; the truth is the
    oracle's closed-form score. Draws are fresh per call, derived from
    ``seed``.
    """
    if mc < 100:
        raise ValueError("need at least 100 Monte Carlo points")
    if abs(oracle.time - t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError(f"oracle is at time {oracle.time}, asked for {t}")
    x = oracle.sample(mc, child_seed(seed, "mse-draw"))
    err = score(x, t) - oracle.score(x)
    sq = np.sum(err * err, axis=1)
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(mc))


def integrated_score_error(
    score, base: GaussianMixture, t0: float, T: float, grid: int, mc: int, seed
) -> float:
    """Trapezoid quadrature of score_mse over a geometric time grid [t0, T]."""
    if not (0 < t0 < T):
        raise ValueError("need 0 < t0 < T")
    if grid < 2:
        raise ValueError("need at least 2 grid nodes")
    times = np.geomspace(t0, T, grid)
    values = np.empty(grid)
    for j, t in enumerate(times):
        oracle = SmoothedOracle(base, float(t))
        values[j], _ = score_mse(score, oracle, float(t), mc, child_seed(seed, "node", j))
    return float(np.trapezoid(values, times))


def _simpson(values: np.ndarray, step: float) -> float:
    w = np.ones(len(values))
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(w @ values) * step / 3.0


def tv_distance_1d(density_a, density_b, lo: float, hi: float, nodes: int = 4001) -> float:
    """Half the L1 distance between two 1-d densities on [lo, hi].

    Composite Simpson on a uniform grid (nodes rounded up to odd). Both
    densities must carry essentially all their mass inside the interval; a
    quadrature mass deficit above 1e-4 for either raises ValueError.
    """
    if nodes < 1000:
        raise ValueError("need at least 1000 quadrature nodes")
    if not (hi > lo):
        raise ValueError("need hi > lo")
    if nodes % 2 == 0:
        nodes += 1
    grid = np.linspace(lo, hi, nodes)
    step = (hi - lo) / (nodes - 1)
    a = np.asarray(density_a(grid), dtype=np.float64)
    b = np.asarray(density_b(grid), dtype=np.float64)
    for name, vals in (("first", a), ("second", b)):
        deficit = 1.0 - _simpson(vals, step)
        if deficit > _TAIL_TOL:
            raise ValueError(
                f"interval [{lo}, {hi}] too small: {name} density mass deficit {deficit:.2e}"
            )
    return 0.5 * _simpson(np.abs(a - b), step)


def _empirical_kde(samples: np.ndarray, t: float) -> ScoreEstimator:
    """Order-2 KDE of a 1-d sample at the estimator module's default bandwidth."""
    base = default_config(n=len(samples), t=t, d=1)
    cfg = EstimatorConfig(
        n=base.n, d=base.d, t=base.t, h=base.h, ell=2,
        rho=base.rho, bandwidth_scale=base.bandwidth_scale,
    )
    return ScoreEstimator(samples, cfg)


def tv_empirical_1d(samples: np.ndarray, reference: SmoothedOracle, nodes: int | None = None) -> float:
    """TV distance between a sample's order-2 KDE and a reference oracle density.

    The integration window is widened to contain every kernel bump and the
    reference's 8-sigma tails, so the mass check in tv_distance_1d cannot
    trip on truncation. Deterministic given the samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2 or samples.shape[1] != 1:
        raise ValueError("samples must be one-dimensional")
    if len(samples) < 10_000:
        raise ValueError("need at least 10^4 samples for a stable empirical TV")
    mix = reference.mixture
    if mix.dim != 1:
        raise ValueError("empirical TV supports d = 1 only")
    kde = _empirical_kde(samples, reference.time)
    h = kde.config.h
    reach = float(np.max(np.abs(mix.means)) + 8.0 * math.sqrt(np.max(mix.variances)))
    lo = min(float(samples.min()) - h, -reach)
    hi = max(float(samples.max()) + h, reach)
    if nodes is None:
        # keep the Simpson step a small fraction of the kernel bump width
        nodes = max(4001, int(math.ceil((hi - lo) / (h / 4.0))) | 1)
    return tv_distance_1d(
        lambda xs: kde.density(xs[:, None]),
        lambda xs: reference.density(xs[:, None]),
        lo, hi, nodes,
    )


def fit_rate_slope(points) -> SlopeFit:
    """Least squares on (ln x, ln y) over the given rate points."""
    points = list(points)
    if len(points) < 2:
        raise ValueError("need at least 2 points to fit a slope")
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    if len(np.unique(xs)) != len(xs):
        raise ValueError("abscissae must be distinct")
    if np.any(ys <= 0):
        raise ValueError("degenerate input: y must be positive for a log-log fit")
    lx, ly = np.log(xs), np.log(ys)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([slope, intercept])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return SlopeFit(slope=float(slope), intercept=float(intercept), r2=r2)


def oracle_score_field(oracle_base: GaussianMixture):
    """Adapter: the exact score as a (points, t) callable (zero MSE by construction)."""
    from .sampler import OracleScoreField

    return OracleScoreField(oracle_base)


def derive_cell_seed(master_seed: int, experiment: str, cell_index: int) -> int:
    """Stable 63-bit per-cell seed from (master seed, experiment name, cell index)."""
    ss = child_seed(master_seed, experiment, cell_index)
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
