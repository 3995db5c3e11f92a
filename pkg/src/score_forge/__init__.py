"""score-forge: truncated kernel score estimation for Gaussian-smoothed
densities, Brownian reverse-SDE sampling, and the experiment harness that
verifies the estimator's rate behavior against closed-form oracles."""

__version__ = "0.1.0"

from .dist import (
    GaussianMixture,
    SmoothedOracle,
    forward_perturb,
    mixture_from_dict,
    mixture_to_dict,
    standard_normal,
    symmetric_pair,
)
from .estimator import EstimatorConfig, ScoreEstimator, default_config
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    config_from_dict,
    config_to_dict,
    emit_csv,
    emit_svg,
    load_config,
    run_experiment,
)
from .kernel import (
    KernelSpec,
    ProductKernel,
    build_kernel,
    kernel_deriv_eval,
    kernel_eval,
    legendre_eval,
    legendre_moment,
    moment_report,
    product_eval,
)
from .metrics import (
    RatePoint,
    SlopeFit,
    fit_rate_slope,
    integrated_score_error,
    score_mse,
    tv_distance_1d,
    tv_empirical_1d,
)
from .sampler import (
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

__all__ = [
    "GaussianMixture",
    "SmoothedOracle",
    "forward_perturb",
    "mixture_from_dict",
    "mixture_to_dict",
    "standard_normal",
    "symmetric_pair",
    "EstimatorConfig",
    "ScoreEstimator",
    "default_config",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "config_from_dict",
    "config_to_dict",
    "emit_csv",
    "emit_svg",
    "load_config",
    "run_experiment",
    "KernelSpec",
    "ProductKernel",
    "build_kernel",
    "kernel_deriv_eval",
    "kernel_eval",
    "legendre_eval",
    "legendre_moment",
    "moment_report",
    "product_eval",
    "RatePoint",
    "SlopeFit",
    "fit_rate_slope",
    "integrated_score_error",
    "score_mse",
    "tv_distance_1d",
    "tv_empirical_1d",
    "KernelScoreBank",
    "OracleScoreField",
    "SamplerConfig",
    "ZeroScoreField",
    "bm_to_ou_time",
    "ou_to_bm_time",
    "reverse_sample",
    "scale_ou_sample",
    "time_grid",
]
