"""Experiment runner behind the ``score-forge`` CLI.

An experiment is described by a single JSON config (unknown fields are
rejected), runs cell by cell in an optional worker pool, and persists
three artifacts under the output directory:

    results.csv   one row per measured cell: experiment,cell_index,x,y,stderr,seed
    slopes.csv    the log-log fits, one row per fitted series
    plot.svg      log-log scatter with the fitted line and slope annotation

Per-cell seeds are derived by hashing (master seed, experiment name, cell
index), so cells can run in any order, on any number of workers, and the
CSV bytes never change for a given config.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from ._rng import child_seed
from .dist import GaussianMixture, SmoothedOracle, forward_perturb, mixture_from_dict, mixture_to_dict
from .estimator import ScoreEstimator, default_config, with_order
from .kernel import moment_report, build_kernel
from .metrics import (
    RatePoint,
    SlopeFit,
    derive_cell_seed,
    fit_rate_slope,
    score_mse,
    tv_distance_1d,
    tv_empirical_1d,
)
from .sampler import SCHEDULES, KernelScoreBank, SamplerConfig, reverse_sample

log = logging.getLogger("score_forge.harness")

EXPERIMENTS = ("t-slope", "n-slope", "integrated", "end-to-end", "kernel-certify")

CERTIFY_UNIT_TOL = 1e-9
CERTIFY_MOMENT_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    mixture: GaussianMixture | None = None
    n_grid: tuple[int, ...] = ()
    t_grid: tuple[float, ...] = ()
    beta: float = 2.0
    C: float = 1.0
    mc: int = 5000
    steps: int = 120
    schedule: str = "geometric"
    replicates: int = 1
    order: int | None = None
    t_upper: float = 10.0
    grid_nodes: int = 16
    t_cap: float = 64.0
    orders: tuple[int, ...] = (2, 4, 8, 16)
    aggregate: str = "median"
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule: must be one of {SCHEDULES}")
        if self.aggregate not in ("median", "mean"):
            raise ConfigError("aggregate: must be 'median' or 'mean'")
        for name in ("beta", "C", "t_upper", "t_cap"):
            if not (getattr(self, name) > 0):
                raise ConfigError(f"{name}: must be positive")
        for name in ("mc", "steps", "replicates", "grid_nodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.order is not None and self.order < 1:
            raise ConfigError("order: must be >= 1 when given")
        for name, grid in (("n_grid", self.n_grid), ("t_grid", self.t_grid)):
            vals = list(grid)
            if any(v <= 0 for v in vals):
                raise ConfigError(f"{name}: entries must be positive")
            if vals != sorted(vals) or len(set(vals)) != len(vals):
                raise ConfigError(f"{name}: must be strictly increasing")
        needs_mixture = self.experiment != "kernel-certify"
        if needs_mixture and self.mixture is None:
            raise ConfigError("mixture: required for this experiment")
        if self.experiment == "t-slope":
            self._require_len("n_grid", exactly=1)
            self._require_len("t_grid", at_least=3)
        elif self.experiment == "n-slope":
            self._require_len("n_grid", at_least=3)
            self._require_len("t_grid", exactly=1)
        elif self.experiment == "integrated":
            self._require_len("n_grid", exactly=1)
            self._require_len("t_grid", at_least=2)
            if self.t_upper <= max(self.t_grid):
                raise ConfigError("t_upper: must exceed every t_grid entry")
        elif self.experiment == "end-to-end":
            self._require_len("n_grid", at_least=1)
        elif self.experiment == "kernel-certify":
            if not self.orders or any(o < 1 for o in self.orders):
                raise ConfigError("orders: need a list of orders >= 1")

    def _require_len(self, name: str, exactly: int | None = None, at_least: int | None = None):
        n = len(getattr(self, name))
        if exactly is not None and n != exactly:
            raise ConfigError(f"{name}: {self.experiment} needs exactly {exactly} entries, got {n}")
        if at_least is not None and n < at_least:
            raise ConfigError(f"{name}: {self.experiment} needs at least {at_least} entries, got {n}")


_CONFIG_FIELDS = {f.name for f in dc_fields(ExperimentConfig)}


def config_from_dict(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("top level: expected a JSON object")
    unknown = set(obj) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "experiment" not in obj:
        raise ConfigError("experiment: field is required")
    kwargs = dict(obj)
    if kwargs.get("mixture") is not None:
        try:
            kwargs["mixture"] = mixture_from_dict(kwargs["mixture"])
        except ValueError as e:
            raise ConfigError(f"mixture: {e}") from e
    for name in ("n_grid", "t_grid", "orders"):
        if name in kwargs:
            kwargs[name] = tuple(kwargs[name])
    if "n_grid" in kwargs:
        kwargs["n_grid"] = tuple(int(v) for v in kwargs["n_grid"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dc_fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "mixture":
            value = None if value is None else mixture_to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return config_from_dict(obj)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[tuple[str, int, RatePoint]] = field(default_factory=list)
    slopes: dict[str, SlopeFit] = field(default_factory=dict)
    wall_clock: list[float] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def master_seed(self) -> int:
        return self.config.seed

    def series(self, name: str) -> list[RatePoint]:
        return [p for s, _, p in self.rows if s == name]


# --------------------------------------------------------------------------
# cells
# --------------------------------------------------------------------------


def _estimator_field(est: ScoreEstimator):
    return lambda x, t: est.score(x)


def _mse_cell(mix, n, t, mc, replicates, C, order, cell_seed, aggregate="median"):
    """Weighted score MSE over independent (data, query) replicates.

    The per-replicate mean is extremely heavy-tailed: rare query points
    land where the density estimate barely clears the threshold and the
    ratio explodes. The default cell value is therefore the median of the
    replicate means (a standard robust mean estimate); ``aggregate="mean"``
    gives the plain average.
    """
    oracle = SmoothedOracle(mix, t)
    values = np.empty(replicates)
    errs = np.empty(replicates)
    for r in range(replicates):
        data0 = mix.sample(n, child_seed(cell_seed, "data", r))
        data_t = forward_perturb(data0, t, child_seed(cell_seed, "noise", r))
        cfg = default_config(n=n, t=t, d=mix.dim, C=C)
        if order is not None:
            cfg = with_order(cfg, order)
        est = ScoreEstimator(data_t, cfg)
        values[r], errs[r] = score_mse(_estimator_field(est), oracle, t, mc, child_seed(cell_seed, "mse", r))
    if aggregate == "mean":
        return float(values.mean()), float(np.sqrt(np.sum(errs**2)) / replicates)
    mad = float(np.median(np.abs(values - np.median(values))))
    return float(np.median(values)), 1.4826 * mad / math.sqrt(replicates)


def _run_cells(cfg: ExperimentConfig, labels, worker, threads: int):
    """Run one worker per cell, preserving cell order in the output."""
    results = [None] * len(labels)

    def timed(idx):
        start = time.perf_counter()
        out = worker(idx)
        return out, time.perf_counter() - start

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(timed, i): i for i in range(len(labels))}
            for fut, i in futures.items():
                results[i] = fut.result()
    else:
        for i in range(len(labels)):
            results[i] = timed(i)
    rows, clocks = [], []
    for i, (point, elapsed) in enumerate(results):
        rows.append((labels[i], i, point))
        clocks.append(elapsed)
        log.info("cell %s[%d]: x=%g y=%g (%.2fs)", labels[i], i, point.x, point.y, elapsed)
    return rows, clocks


def _run_t_slope(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    n = cfg.n_grid[0]

    def worker(idx):
        t = cfg.t_grid[idx]
        cell_seed = derive_cell_seed(cfg.seed, "t-slope", idx)
        value, stderr = _mse_cell(cfg.mixture, n, t, cfg.mc, cfg.replicates, cfg.C, cfg.order, cell_seed, cfg.aggregate)
        return RatePoint(x=t, y=value, stderr=stderr, seed=cell_seed)

    rows, clocks = _run_cells(cfg, ["t-slope"] * len(cfg.t_grid), worker, threads)
    result = ExperimentResult(cfg, rows, wall_clock=clocks)
    result.slopes["t-slope"] = fit_rate_slope(result.series("t-slope"))
    return result


def _run_n_slope(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    t = cfg.t_grid[0]
    # one kernel order across the sweep: growing the order with n drags a
    # polylog factor into the fitted slope instead of the intercept
    order = cfg.order if cfg.order is not None else math.ceil(math.log(max(cfg.n_grid)))

    def worker(idx):
        n = cfg.n_grid[idx]
        cell_seed = derive_cell_seed(cfg.seed, "n-slope", idx)
        value, stderr = _mse_cell(cfg.mixture, n, t, cfg.mc, cfg.replicates, cfg.C, order, cell_seed, cfg.aggregate)
        return RatePoint(x=float(n), y=value, stderr=stderr, seed=cell_seed)

    rows, clocks = _run_cells(cfg, ["n-slope"] * len(cfg.n_grid), worker, threads)
    result = ExperimentResult(cfg, rows, wall_clock=clocks)
    result.slopes["n-slope"] = fit_rate_slope(result.series("n-slope"))
    return result


def _run_integrated(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    n = cfg.n_grid[0]

    def worker(idx):
        t0 = cfg.t_grid[idx]
        cell_seed = derive_cell_seed(cfg.seed, "integrated", idx)
        totals = np.empty(cfg.replicates)
        sq_err = 0.0
        times = np.geomspace(t0, cfg.t_upper, cfg.grid_nodes)
        weights = np.zeros(cfg.grid_nodes)
        weights[:-1] += 0.5 * np.diff(times)
        weights[1:] += 0.5 * np.diff(times)
        for r in range(cfg.replicates):
            data0 = cfg.mixture.sample(n, child_seed(cell_seed, "data", r))
            bank = KernelScoreBank(data0, child_seed(cell_seed, "bank", r), C=cfg.C, order=cfg.order)
            node_vals = np.empty(cfg.grid_nodes)
            node_errs = np.empty(cfg.grid_nodes)
            for j, t in enumerate(times):
                oracle = SmoothedOracle(cfg.mixture, float(t))
                node_vals[j], node_errs[j] = score_mse(
                    bank, oracle, float(t), cfg.mc, child_seed(cell_seed, "node", r, j)
                )
            totals[r] = float(weights @ node_vals)
            sq_err += float(np.sum((weights * node_errs) ** 2))
        stderr = math.sqrt(sq_err) / cfg.replicates
        return RatePoint(x=t0, y=float(totals.mean()), stderr=stderr, seed=cell_seed)

    rows, clocks = _run_cells(cfg, ["integrated"] * len(cfg.t_grid), worker, threads)
    result = ExperimentResult(cfg, rows, wall_clock=clocks)
    result.slopes["integrated"] = fit_rate_slope(result.series("integrated"))
    return result


def _moment_error(samples: np.ndarray, oracle: SmoothedOracle) -> float:
    """Scalar moment proxy for d >= 2 where the TV quadrature is unavailable."""
    mix = oracle.mixture
    mean_true = mix.weights @ mix.means
    second = mix.weights @ (mix.variances[:, None] + mix.means**2)
    var_true = second - mean_true**2
    mean_err = np.linalg.norm(samples.mean(axis=0) - mean_true)
    var_err = np.linalg.norm(samples.var(axis=0) - var_true)
    return float(mean_err + var_err / np.linalg.norm(var_true))


def _run_end_to_end(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    d = cfg.mixture.dim

    def worker(idx):
        n = cfg.n_grid[idx]
        cell_seed = derive_cell_seed(cfg.seed, "end-to-end", idx)
        t0 = n ** (-2.0 / (2 * cfg.beta + d))
        T_raw = n ** (2.0 * cfg.beta / (2 * cfg.beta + d))
        T = min(T_raw, cfg.t_cap)
        if T < T_raw:
            log.info("cell end-to-end[%d]: capping T=%g at %g", idx, T_raw, cfg.t_cap)
        data0 = cfg.mixture.sample(n, child_seed(cell_seed, "data"))
        bank = KernelScoreBank(data0, child_seed(cell_seed, "bank"), C=cfg.C, order=cfg.order)
        sampler_cfg = SamplerConfig(T=T, t0=t0, steps=cfg.steps, schedule=cfg.schedule, seed=cell_seed)
        samples = reverse_sample(bank, sampler_cfg, cfg.mc)
        oracle = SmoothedOracle(cfg.mixture, t0)
        if d == 1:
            y = tv_empirical_1d(samples[:, 0], oracle)
        else:
            y = _moment_error(samples, oracle)
        return RatePoint(x=float(n), y=y, stderr=0.0, seed=cell_seed)

    rows, clocks = _run_cells(cfg, ["end-to-end"] * len(cfg.n_grid), worker, threads)
    result = ExperimentResult(cfg, rows, wall_clock=clocks)

    if d == 1:
        # the early-stopping gap TV(p_0, p_{t0}) is reported as its own series
        reach = cfg.mixture.sub_gaussian_proxy
        for idx, n in enumerate(cfg.n_grid):
            t0 = n ** (-2.0 / (2 * cfg.beta + d))
            hi = reach + 8.0 * math.sqrt(float(np.max(cfg.mixture.variances)) + t0)
            gap = tv_distance_1d(
                cfg.mixture.density, SmoothedOracle(cfg.mixture, t0).density, -hi, hi, 4001
            )
            result.rows.append(
                ("end-to-end-earlystop", idx, RatePoint(x=float(n), y=gap, stderr=0.0, seed=cfg.seed))
            )
    if len(cfg.n_grid) >= 2:
        result.slopes["end-to-end"] = fit_rate_slope(result.series("end-to-end"))
    return result


def _run_kernel_certify(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    result = ExperimentResult(cfg)
    for idx, order in enumerate(cfg.orders):
        start = time.perf_counter()
        unit_defect, worst_moment = moment_report(build_kernel(order))
        elapsed = time.perf_counter() - start
        result.rows.append(
            ("kernel-certify-unit", idx, RatePoint(x=float(order), y=unit_defect, stderr=0.0, seed=cfg.seed))
        )
        result.rows.append(
            ("kernel-certify-moments", idx, RatePoint(x=float(order), y=worst_moment, stderr=0.0, seed=cfg.seed))
        )
        result.wall_clock.append(elapsed)
        log.info("cell kernel-certify[%d]: order=%d unit=%.2e moments=%.2e (%.3fs)",
                 idx, order, unit_defect, worst_moment, elapsed)
        if unit_defect >= CERTIFY_UNIT_TOL:
            result.failures.append(f"order {order}: |int K - 1| = {unit_defect:.3e} >= {CERTIFY_UNIT_TOL}")
        if worst_moment >= CERTIFY_MOMENT_TOL:
            result.failures.append(f"order {order}: max moment defect {worst_moment:.3e} >= {CERTIFY_MOMENT_TOL}")
    return result


_RUNNERS = {
    "t-slope": _run_t_slope,
    "n-slope": _run_n_slope,
    "integrated": _run_integrated,
    "end-to-end": _run_end_to_end,
    "kernel-certify": _run_kernel_certify,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1) -> ExperimentResult:
    """Execute the configured experiment and write its artifacts.

    Raises ConfigError for configuration problems and RuntimeError when a
    measurement comes back non-finite.
    """
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is None:
        raise ConfigError("out_dir: not set in config and not passed to run_experiment")
    result = _RUNNERS[cfg.experiment](cfg, max(1, threads))
    for series, idx, point in result.rows:
        if not (math.isfinite(point.x) and math.isfinite(point.y)):
            raise RuntimeError(f"non-finite measurement in cell {series}[{idx}]: {point}")
    emit_csv(result, target)
    emit_svg(result, target)
    return result


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------


def emit_csv(result: ExperimentResult, out_dir: str | Path):
    """Write results.csv and slopes.csv; float fields use repr (round-trip exact)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    lines = ["experiment,cell_index,x,y,stderr,seed"]
    for series, idx, p in result.rows:
        lines.append(f"{series},{idx},{p.x!r},{p.y!r},{p.stderr!r},{p.seed}")
    results_path.write_text("\n".join(lines) + "\n")

    slopes_path = out / "slopes.csv"
    lines = ["experiment,series,slope,intercept,r2"]
    for name, fitted in result.slopes.items():
        lines.append(
            f"{result.config.experiment},{name},{fitted.slope!r},{fitted.intercept!r},{fitted.r2!r}"
        )
    slopes_path.write_text("\n".join(lines) + "\n")
    return results_path, slopes_path


_SVG_W, _SVG_H = 640, 480
_MARGIN = 60


def emit_svg(result: ExperimentResult, out_dir: str | Path):
    """Log-log scatter of the primary series with the fitted line, if any."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "plot.svg"
    primary = result.config.experiment
    points = [p for p in result.series(primary) if p.y > 0]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="24" text-anchor="middle" font-size="16">'
        f"{primary}: log-log rate</text>",
    ]
    if points:
        lx = [math.log(p.x) for p in points]
        ly = [math.log(p.y) for p in points]
        fitted = result.slopes.get(primary)
        fy = [fitted.slope * v + fitted.intercept for v in lx] if fitted else []
        x0, x1 = min(lx), max(lx)
        y0, y1 = min(ly + fy), max(ly + fy)
        sx, sy = (x1 - x0) or 1.0, (y1 - y0) or 1.0

        def to_px(v):
            return _MARGIN + (v - x0) / sx * (_SVG_W - 2 * _MARGIN)

        def to_py(v):
            return _SVG_H - _MARGIN - (v - y0) / sy * (_SVG_H - 2 * _MARGIN)

        for vx, vy in zip(lx, ly):
            parts.append(f'<circle cx="{to_px(vx):.2f}" cy="{to_py(vy):.2f}" r="4" fill="steelblue"/>')
        if fitted:
            parts.append(
                f'<line x1="{to_px(lx[0]):.2f}" y1="{to_py(fy[0]):.2f}" '
                f'x2="{to_px(lx[-1]):.2f}" y2="{to_py(fy[-1]):.2f}" '
                'stroke="firebrick" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{_SVG_W - _MARGIN}" y="48" text-anchor="end" font-size="14">'
                f"slope={fitted.slope:.3f}</text>"
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
