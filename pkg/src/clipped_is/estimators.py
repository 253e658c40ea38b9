"""Point estimates and degeneracy diagnostics from a weighted particle set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sampler import ParticleSet

# from this many particles on, weighted sums use exact (fsum) accumulation
COMPENSATED_THRESHOLD = 10_000


@dataclass(frozen=True)
class TrialEstimate:
    """Posterior-mean estimate and weight diagnostics for one sampler run."""

    posterior_mean: np.ndarray
    max_weight: float
    ess: float
    method: str
    clip_count: Optional[int] = None


def _weighted_sum(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    if len(weights) < COMPENSATED_THRESHOLD:
        return weights @ values
    terms = weights[:, None] * values
    return np.array([math.fsum(col) for col in terms.T])


def expectation(f: Callable[[np.ndarray], np.ndarray], ps: ParticleSet) -> np.ndarray:
    """Weighted average ``sum_i w_i f(x_i)``.

    ``f`` is applied to the whole ``(M, 3)`` sample array and must return an
    ``(M,)`` or ``(M, k)`` array.
    """
    values = np.asarray(f(ps.samples), dtype=float)
    if values.shape[0] != len(ps):
        raise ValueError("f must return one row per sample")
    if values.ndim == 1:
        return _weighted_sum(ps.weights, values[:, None])[0]
    return _weighted_sum(ps.weights, values.reshape(len(ps), -1))


def posterior_mean(ps: ParticleSet) -> np.ndarray:
    return _weighted_sum(ps.weights, ps.samples)


def max_weight(ps: ParticleSet) -> float:
    return float(np.max(ps.weights))


def effective_sample_size(ps: ParticleSet) -> float:
    """``1 / sum_i w_i**2``; equals M for uniform weights and 1 for a point mass."""
    w = ps.weights
    # clamp rounding excursions outside [1, M]
    return float(min(max(1.0 / np.dot(w, w), 1.0), len(w)))


def summarize(ps: ParticleSet) -> TrialEstimate:
    return TrialEstimate(
        posterior_mean=posterior_mean(ps),
        max_weight=max_weight(ps),
        ess=effective_sample_size(ps),
        method=ps.method,
        clip_count=ps.clip_count,
    )
