"""Statistical model of the mixture-means experiment.

A three-component 1-D Gaussian mixture with unknown component means, a
shared known variance and known mixing coefficients, plus an independent
Gaussian prior over the three means. All densities are returned in the
log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 3
LOG_2PI = math.log(2.0 * math.pi)


class ParameterError(ValueError):
    """A model, prior or sampler argument violates its domain."""


def log_sum_exp(a, axis=None):
    """``log(sum(exp(a)))`` along ``axis``, shifted by the maximum.

    All ``-inf`` slices give ``-inf``.
    """
    a = np.asarray(a, dtype=float)
    peak = np.max(a, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True)) + peak
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def _as_state(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (STATE_DIM,):
        raise ParameterError(f"{name} must have shape ({STATE_DIM},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixture parameterization; also serves as the ground truth.

    The third mixing coefficient is implied as ``1 - coeff1 - coeff2``.
    """

    means: np.ndarray = field(default_factory=lambda: np.array([0.0, 2.0, 4.0]))
    coeff1: float = 0.2
    coeff2: float = 0.3
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "means", _as_state(self.means, "means"))
        c1, c2, var = float(self.coeff1), float(self.coeff2), float(self.variance)
        if not (0.0 <= c1 <= 1.0):
            raise ParameterError(f"coeff1 must lie in [0, 1], got {c1}")
        if not (0.0 <= c2 <= 1.0):
            raise ParameterError(f"coeff2 must lie in [0, 1], got {c2}")
        # small slack so that e.g. 0.7 + 0.3 is accepted
        if c1 + c2 > 1.0 + 1e-12:
            raise ParameterError(f"coeff1 + coeff2 must not exceed 1, got {c1 + c2}")
        if not (var > 0.0 and math.isfinite(var)):
            raise ParameterError(f"variance must be positive and finite, got {var}")
        object.__setattr__(self, "coeff1", c1)
        object.__setattr__(self, "coeff2", c2)
        object.__setattr__(self, "variance", var)

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.coeff1, self.coeff2, max(0.0, 1.0 - self.coeff1 - self.coeff2)])

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def __eq__(self, other):
        if not isinstance(other, GmmParams):
            return NotImplemented
        return (np.array_equal(self.means, other.means) and self.coeff1 == other.coeff1
                and self.coeff2 == other.coeff2 and self.variance == other.variance)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """Independent Gaussian prior on each mixture mean."""

    mean: np.ndarray = field(default_factory=lambda: np.ones(STATE_DIM))
    variance: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_state(self.mean, "prior mean"))
        var = float(self.variance)
        if not (var > 0.0 and math.isfinite(var)):
            raise ParameterError(f"prior variance must be positive and finite, got {var}")
        object.__setattr__(self, "variance", var)

    def __eq__(self, other):
        if not isinstance(other, GaussianPrior):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and self.variance == other.variance

    __hash__ = None


def check_observations(values) -> np.ndarray:
    """Validate an observation set and return it as a 1-D float array."""
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise ParameterError("observation set must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(y)):
        raise ParameterError("observations must be finite")
    return y


def gmm_log_density(y, x, params: GmmParams):
    """Log-density of the mixture at ``y`` for component means ``x``.

    Broadcasts: ``y`` has shape ``S`` and ``x`` has shape ``S' + (3,)``;
    the result has the broadcast shape of ``S`` and ``S'``. The three
    component terms are combined with log-sum-exp, so the result stays
    finite far out in the tails.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (STATE_DIM,):
        raise ParameterError(f"x must have trailing dimension {STATE_DIM}")
    var = params.variance
    dev = y[..., None] - x
    comp = params.log_weights - 0.5 * (dev * dev) / var - 0.5 * (LOG_2PI + math.log(var))
    out = log_sum_exp(comp, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def prior_log_density(x, prior: GaussianPrior):
    """Sum of the per-dimension Gaussian log-densities of ``x`` (shape ``(..., 3)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (STATE_DIM,):
        raise ParameterError(f"x must have trailing dimension {STATE_DIM}")
    dev = x - prior.mean
    out = np.sum(-0.5 * dev * dev / prior.variance, axis=-1) - 0.5 * STATE_DIM * (
        LOG_2PI + math.log(prior.variance)
    )
    return float(out) if np.ndim(out) == 0 else out


def sample_prior(prior: GaussianPrior, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` states from the prior as a ``(count, 3)`` array.

    Rows are filled in stream order, so the first ``k`` rows of a draw of
    size ``n >= k`` coincide with a draw of size ``k`` from the same stream
    state.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((int(count), STATE_DIM))
    return prior.mean + math.sqrt(prior.variance) * z


def sample_observations(params: GmmParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling of ``count`` i.i.d. observations from the mixture.

    Each observation consumes one uniform (component choice by inverse CDF)
    and one standard normal.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    count = int(count)
    u = rng.random(count)
    z = rng.standard_normal(count)
    cdf = np.cumsum(params.weights)[:-1]
    component = np.searchsorted(cdf, u, side="right")
    return params.means[component] + math.sqrt(params.variance) * z
