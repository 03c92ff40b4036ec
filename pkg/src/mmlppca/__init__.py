"""Rank selection and residual-variance estimation for probabilistic PCA.

The covariance of a centered K-dimensional sample is modelled as a rank-J
factor structure plus isotropic noise.  This package estimates the noise
variance and the number of components by minimising a two-part codelength,
provides BIC and Laplace-evidence comparators, and ships a seeded
Monte-Carlo harness for estimator and selection-rate studies.
"""

from .errors import (
    DegenerateSpectrum,
    DomainError,
    IllConditionedPolynomial,
    InvalidData,
    InvalidParameter,
    InvalidRank,
    MmlPcaError,
    NoValidRoot,
    NumericalFailure,
)
from .spectrum import (
    Spectrum,
    center_columns,
    eigen_descending,
    load_csv,
    max_rank,
    sample_covariance,
    spectrum_from_data,
)
from .mml import (
    CodelengthBreakdown,
    MmlPolynomial,
    PcaFit,
    SelectionReport,
    candidate_ranks,
    concentrated_codelength,
    esp,
    find_real_roots,
    free_param_count,
    full_codelength,
    log_fisher_det,
    log_multivariate_gamma,
    log_prior,
    ml_estimate,
    mml_estimate,
    mml_polynomial,
    negative_log_likelihood,
    quantization_nats,
    residual_polynomial_coefficients,
    select_rank_mml,
)
from .criteria import bic_score, laplace_evidence, select_rank
from .simlab import (
    DEFAULT_SEED,
    SimConfig,
    SimResult,
    generate_dataset,
    kl_gaussian,
    kl_gaussian_eigen,
    load_config,
    metric_s1s2,
    parse_config,
    run_estimation_experiment,
    run_selection_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "MmlPcaError",
    "InvalidData",
    "InvalidParameter",
    "InvalidRank",
    "DegenerateSpectrum",
    "NoValidRoot",
    "IllConditionedPolynomial",
    "NumericalFailure",
    "DomainError",
    "Spectrum",
    "load_csv",
    "center_columns",
    "sample_covariance",
    "eigen_descending",
    "spectrum_from_data",
    "max_rank",
    "PcaFit",
    "CodelengthBreakdown",
    "MmlPolynomial",
    "SelectionReport",
    "esp",
    "residual_polynomial_coefficients",
    "mml_polynomial",
    "find_real_roots",
    "ml_estimate",
    "mml_estimate",
    "negative_log_likelihood",
    "concentrated_codelength",
    "log_multivariate_gamma",
    "log_prior",
    "log_fisher_det",
    "quantization_nats",
    "free_param_count",
    "full_codelength",
    "select_rank_mml",
    "candidate_ranks",
    "bic_score",
    "laplace_evidence",
    "select_rank",
    "DEFAULT_SEED",
    "SimConfig",
    "SimResult",
    "generate_dataset",
    "metric_s1s2",
    "kl_gaussian",
    "kl_gaussian_eigen",
    "run_estimation_experiment",
    "run_selection_experiment",
    "load_config",
    "parse_config",
    "__version__",
]
