"""Importance weights for the prior-proposal sampler, plain and clipped.

With the prior as proposal the unnormalized importance weight of a state
is its likelihood, so log-weights are sums of per-observation mixture
log-densities. Clipping replaces the ``m_t`` largest weights with the
``m_t``-th largest one; since the map is monotone it is applied directly
to log-weights. Nothing is exponentiated before normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from .core import LOG_2PI, STATE_DIM, GmmParams, ParameterError, check_observations

# rows of samples per block in compute_log_weights; keeps the
# (3, block, N) scratch buffers in cache for N ~ 1000
_BLOCK_ROWS = 32


class DegenerateWeightsError(ArithmeticError):
    """Every log-weight is -inf, so the weights cannot be normalized."""


@dataclass(frozen=True)
class FixedClip:
    """Clip a fixed number of weights."""

    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ParameterError(f"clip count must be a positive integer, got {self.count}")


@dataclass(frozen=True)
class LogClip:
    """Clip ``round(log_base(M))`` weights for a sample of size ``M``."""

    base: float = math.e

    def __post_init__(self):
        if not (self.base > 1.0 and math.isfinite(self.base)):
            raise ParameterError(f"log base must be finite and > 1, got {self.base}")


ClippingPolicy = Union[FixedClip, LogClip]


def resolve_clip_count(policy: ClippingPolicy, sample_size: int) -> int:
    """Number of clipped weights for ``sample_size`` samples, in ``[1, M-1]``."""
    if sample_size < 2:
        raise ParameterError(f"sample size must be >= 2 to clip, got {sample_size}")
    if isinstance(policy, FixedClip):
        m_t = int(policy.count)
    elif isinstance(policy, LogClip):
        # round half up; log of an integer is never exactly x.5 in practice
        m_t = int(math.floor(math.log(sample_size) / math.log(policy.base) + 0.5))
    else:
        raise TypeError(f"unknown clipping policy {policy!r}")
    return min(max(m_t, 1), sample_size - 1)


def compute_log_weights(samples, obs, params: GmmParams) -> np.ndarray:
    """Unnormalized log importance weights (log-likelihoods) of ``samples``.

    Parameters
    ----------
    samples : array_like, shape (M, 3)
        States drawn from the prior.
    obs : array_like, shape (N,)
        Observations, conditionally i.i.d. given the state.
    params : GmmParams
        Supplies the mixing coefficients and variance; its means are ignored.

    Returns
    -------
    ndarray, shape (M,)
        ``sum_n log p(y_n | x_i)``. Each row is computed independently of the
        others, so a prefix of ``samples`` yields a bit-identical prefix of the
        output.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != STATE_DIM or x.shape[0] < 1:
        raise ParameterError(f"samples must have shape (M, {STATE_DIM}) with M >= 1")
    try:
        y = check_observations(obs)
    except ParameterError as exc:
        raise ParameterError(f"invalid observation set: {exc}") from None

    m_rows, n_obs = x.shape[0], y.size
    half_prec = 0.5 / params.variance
    log_w = params.log_weights
    const = -0.5 * (LOG_2PI + math.log(params.variance))

    out = np.empty(m_rows)
    block = min(_BLOCK_ROWS, m_rows)
    terms = np.empty((STATE_DIM, block, n_obs))
    peak = np.empty((block, n_obs))
    total = np.empty((block, n_obs))
    for start in range(0, m_rows, block):
        xs = x[start:start + block]
        b = xs.shape[0]
        t, pk, tot = terms[:, :b], peak[:b], total[:b]
        for k in range(STATE_DIM):
            tk = t[k]
            np.subtract(y[None, :], xs[:, k, None], out=tk)
            np.square(tk, out=tk)
            tk *= -half_prec
            tk += log_w[k]
        np.maximum(t[0], t[1], out=pk)
        np.maximum(pk, t[2], out=pk)
        t -= pk
        np.exp(t, out=t)
        np.sum(t, axis=0, out=tot)
        np.log(tot, out=tot)
        tot += pk
        out[start:start + b] = tot.sum(axis=1)
    out += n_obs * const
    return out


def clip_log_weights(log_weights, clip_count: int) -> np.ndarray:
    """Cap every log-weight at the ``clip_count``-th largest value.

    Index order is preserved. ``clip_count == 1`` returns the input values
    unchanged. Ties at the threshold are irrelevant: all tied entries map to
    the same value.
    """
    lw = np.asarray(log_weights, dtype=float)
    m = lw.size
    if not (1 <= clip_count < m):
        raise ParameterError(f"clip count must lie in [1, {m - 1}], got {clip_count}")
    # the (m - clip_count)-th order statistic ascending is the clip_count-th largest
    threshold = np.partition(lw, m - clip_count)[m - clip_count]
    return np.minimum(lw, threshold)


def normalize_weights(log_weights) -> np.ndarray:
    """Normalized weights ``exp(lw - logsumexp(lw))``.

    Computed as ``exp(lw - max) / sum(exp(lw - max))``, which is the same
    quantity and never overflows or underflows the total.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size < 1:
        raise ParameterError("log-weights must be nonempty")
    peak = lw.max()  # NaN propagates through max
    if np.isnan(peak) or peak == np.inf:
        raise ParameterError("log-weights must not contain NaN or +inf")
    if peak == -np.inf:
        raise DegenerateWeightsError("all log-weights are -inf")
    w = np.exp(lw - peak)
    w /= w.sum()
    return w


@dataclass(frozen=True)
class ParticleSet:
    """Weighted samples defining a discrete approximation of the posterior.

    ``log_weights`` are the (possibly clipped) unnormalized log-weights from
    which ``weights`` were obtained. ``clip_count`` is ``None`` for plain IS.
    """

    samples: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    clip_count: Optional[int] = None

    def __post_init__(self):
        m = len(self.samples)
        if len(self.log_weights) != m or len(self.weights) != m:
            raise ParameterError("samples, log_weights and weights must have equal length")
        for arr in (self.samples, self.log_weights, self.weights):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.samples)

    @property
    def method(self) -> str:
        return "IS" if self.clip_count is None else "NIS"


def is_from_log_weights(samples, log_weights) -> ParticleSet:
    """Plain IS particle set from precomputed log-weights."""
    samples = np.array(samples, dtype=float)
    lw = np.array(log_weights, dtype=float)
    return ParticleSet(samples, lw, normalize_weights(lw))


def nis_from_log_weights(samples, log_weights, clip_count: int) -> ParticleSet:
    """Clipped-weight particle set from precomputed (unclipped) log-weights."""
    samples = np.array(samples, dtype=float)
    clipped = clip_log_weights(log_weights, clip_count)
    return ParticleSet(samples, clipped, normalize_weights(clipped), int(clip_count))


def run_is(samples, obs, params: GmmParams) -> ParticleSet:
    return is_from_log_weights(samples, compute_log_weights(samples, obs, params))


def run_nis(samples, obs, params: GmmParams, policy: ClippingPolicy) -> ParticleSet:
    lw = compute_log_weights(samples, obs, params)
    return nis_from_log_weights(samples, lw, resolve_clip_count(policy, len(lw)))
