"""Importance sampling with clipped (transformed) importance weights."""

__version__ = "0.1.0"

from .core import (
    GaussianPrior,
    GmmParams,
    ParameterError,
    gmm_log_density,
    prior_log_density,
    sample_observations,
    sample_prior,
)
from .sampler import (
    ClippingPolicy,
    DegenerateWeightsError,
    FixedClip,
    LogClip,
    ParticleSet,
    clip_log_weights,
    compute_log_weights,
    normalize_weights,
    resolve_clip_count,
    run_is,
    run_nis,
)
from .estimators import (
    TrialEstimate,
    effective_sample_size,
    expectation,
    max_weight,
    posterior_mean,
)
from .experiment import (
    AggregateStats,
    ExperimentConfig,
    StreamRole,
    bias_statistic,
    derive_stream,
    mse_statistic,
    run_trial,
    sweep_clipping,
    sweep_sample_size,
    variance_statistic,
)
