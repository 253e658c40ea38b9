"""Monte Carlo protocol comparing plain and clipped-weight IS.

``P`` observation realizations are drawn from the true mixture; for each,
``J`` independent sampler runs are made. Every run draws one set of prior
samples and computes one set of log-weights, from which both the IS and
the clipped (NIS) estimators are formed.

Randomness is keyed: the stream of every work unit is derived from
``(master_seed, role, obs_index, trial_index)`` alone, so results do not
depend on the number of worker processes or on scheduling order.
"""

from __future__ import annotations

import enum
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import GaussianPrior, GmmParams, ParameterError, sample_observations, sample_prior
from .estimators import TrialEstimate, summarize
from .sampler import (
    ClippingPolicy,
    DegenerateWeightsError,
    LogClip,
    compute_log_weights,
    is_from_log_weights,
    nis_from_log_weights,
    resolve_clip_count,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "CLIPPED_IS_WORKERS"
BIAS_NORMS = ("l2", "l1")


class StreamRole(enum.IntEnum):
    OBSERVATIONS = 0
    SAMPLING = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines the numbers an experiment produces.

    ``n_samples`` and ``clipping`` drive :func:`run_trial` and the clipping
    sweep; ``sample_sizes``, ``clip_counts`` and ``obs_counts`` are the sweep
    grids. Paper-scale runs use ``n_mc_trials=1000`` with
    ``n_obs_realizations=75`` (sample-size sweep) or ``200`` (clipping sweep,
    ``n_samples=500``).
    """

    model: GmmParams = field(default_factory=GmmParams)
    prior: GaussianPrior = field(default_factory=GaussianPrior)
    n_observations: int = 1000
    n_samples: int = 1000
    clipping: ClippingPolicy = field(default_factory=LogClip)
    n_obs_realizations: int = 25
    n_mc_trials: int = 200
    master_seed: int = 0
    bias_norm: str = "l2"
    sample_sizes: Tuple[int, ...] = (100, 300, 1000, 3000, 10000)
    clip_counts: Tuple[int, ...] = tuple(range(1, 31))
    obs_counts: Tuple[int, ...] = (100, 300, 1000)

    def __post_init__(self):
        for name in ("n_observations", "n_samples", "n_obs_realizations", "n_mc_trials"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value}")
        if self.n_samples < 2:
            raise ParameterError("n_samples must be >= 2 for clipping")
        if not (0 <= self.master_seed < 2**64):
            raise ParameterError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.bias_norm not in BIAS_NORMS:
            raise ParameterError(f"bias_norm must be one of {BIAS_NORMS}, got {self.bias_norm!r}")
        for name, low in (("sample_sizes", 2), ("clip_counts", 1), ("obs_counts", 1)):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ParameterError(f"{name} must be nonempty")
            if min(values) < low:
                raise ParameterError(f"{name} entries must be >= {low}")
            object.__setattr__(self, name, values)


def derive_stream(master_seed: int, obs_index: int, trial_index: int,
                  role: StreamRole) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, role, obs_index, trial_index)``.

    ``trial_index`` is ignored for observation streams.
    """
    if role == StreamRole.OBSERVATIONS:
        trial_index = 0
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(role), int(obs_index), int(trial_index)))
    return np.random.Generator(np.random.PCG64(seq))


def generate_observations(config: ExperimentConfig, obs_index: int,
                          n_observations: Optional[int] = None) -> np.ndarray:
    n = config.n_observations if n_observations is None else n_observations
    rng = derive_stream(config.master_seed, obs_index, 0, StreamRole.OBSERVATIONS)
    return sample_observations(config.model, n, rng)


def _estimate_pair(samples, log_weights, clip_count: int) -> Tuple[TrialEstimate, TrialEstimate]:
    is_est = summarize(is_from_log_weights(samples, log_weights))
    nis_est = summarize(nis_from_log_weights(samples, log_weights, clip_count))
    return is_est, nis_est


def run_trial(config: ExperimentConfig, obs, stream: np.random.Generator
              ) -> Tuple[TrialEstimate, TrialEstimate]:
    """One IS and one NIS estimate from a single shared prior draw.

    Raises :class:`DegenerateWeightsError` if every weight vanishes.
    """
    samples = sample_prior(config.prior, config.n_samples, stream)
    lw = compute_log_weights(samples, obs, config.model)
    return _estimate_pair(samples, lw, resolve_clip_count(config.clipping, config.n_samples))


# ---------------------------------------------------------------------------
# statistics over a P x J grid of estimates


def _realizations(estimates) -> List[np.ndarray]:
    """Per-realization ``(J_p, 3)`` arrays with failed (NaN) runs dropped."""
    groups = []
    for rows in estimates:
        rows = np.asarray(rows, dtype=float).reshape(-1, 3)
        rows = rows[~np.isnan(rows).any(axis=1)]
        if len(rows):
            groups.append(rows)
    if not groups:
        raise ParameterError("no successful estimates in the grid")
    return groups


def bias_statistic(estimates, truth, norm: str = "l2") -> float:
    """Average over realizations of the norm of the mean estimation error.

    ``estimates`` is a ``(P, J, 3)`` array (NaN rows mark failed runs) or a
    sequence of per-realization ``(J_p, 3)`` arrays.
    """
    if norm not in BIAS_NORMS:
        raise ParameterError(f"norm must be one of {BIAS_NORMS}, got {norm!r}")
    truth = np.asarray(truth, dtype=float)
    ord_ = 2 if norm == "l2" else 1
    errs = [np.linalg.norm(g.mean(axis=0) - truth, ord=ord_) for g in _realizations(estimates)]
    return float(np.mean(errs))


def variance_statistic(estimates) -> float:
    """Average over realizations of the trace of the empirical covariance.

    The covariance is normalized by ``J`` (population form).
    """
    traces = []
    for g in _realizations(estimates):
        if len(g) < 2:
            raise ParameterError("variance needs at least 2 successful runs per realization")
        dev = g - g.mean(axis=0)
        traces.append(np.sum(dev * dev) / len(g))
    return float(np.mean(traces))


def mse_statistic(estimates, truth) -> float:
    """Squared Euclidean error averaged over every successful run."""
    truth = np.asarray(truth, dtype=float)
    pooled = np.concatenate(_realizations(estimates))
    return float(np.mean(np.sum((pooled - truth) ** 2, axis=1)))


@dataclass(frozen=True)
class AggregateStats:
    method: str
    M: int
    M_T: Optional[int]
    N: int
    P: int
    J: int
    bias: float
    variance: float
    mse: float
    mean_max_weight: float
    mean_ess: float
    n_failed: int


@dataclass
class CellResult:
    """All runs for one (method, M, M_T, N) cell of a sweep.

    ``estimates`` has shape ``(P, J, 3)``; ``max_weights`` and ``ess`` have
    shape ``(P, J)``. Failed runs are NaN throughout.
    """

    method: str
    M: int
    M_T: Optional[int]
    N: int
    estimates: np.ndarray
    max_weights: np.ndarray
    ess: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return np.isnan(self.max_weights)

    def aggregate(self, truth, bias_norm: str = "l2") -> AggregateStats:
        P, J = self.max_weights.shape
        n_failed = int(self.failed.sum())
        if n_failed == P * J:
            nan = float("nan")
            return AggregateStats(self.method, self.M, self.M_T, self.N, P, J,
                                  nan, nan, nan, nan, nan, n_failed)
        try:
            variance = variance_statistic(self.estimates)
        except ParameterError:
            variance = float("nan")
        return AggregateStats(
            method=self.method, M=self.M, M_T=self.M_T, N=self.N, P=P, J=J,
            bias=bias_statistic(self.estimates, truth, bias_norm),
            variance=variance,
            mse=mse_statistic(self.estimates, truth),
            mean_max_weight=float(np.nanmean(self.max_weights)),
            mean_ess=float(np.nanmean(self.ess)),
            n_failed=n_failed,
        )


def estimator_gap(a: CellResult, b: CellResult) -> float:
    """Mean distance between the paired estimates of two cells."""
    d = np.linalg.norm(a.estimates - b.estimates, axis=-1)
    return float(np.nanmean(d))


# ---------------------------------------------------------------------------
# sweeps

# per-run record layout: xhat_1..3, max_weight, ess
_REC = 5


def _record(est: TrialEstimate) -> np.ndarray:
    return np.concatenate([est.posterior_mean, [est.max_weight, est.ess]])


def _sample_size_unit(config: ExperimentConfig, sizes: Sequence[int], clip_counts: Sequence[int],
                      unit) -> np.ndarray:
    """Records of shape ``(len(sizes), 2, 5)`` for one (p, j) run.

    One draw of ``max(sizes)`` samples is made; smaller sample sizes use its
    leading rows, which is exactly what a fresh draw of that size from the
    same stream would give.
    """
    p, j, obs = unit
    out = np.full((len(sizes), 2, _REC), np.nan)
    stream = derive_stream(config.master_seed, p, j, StreamRole.SAMPLING)
    samples = sample_prior(config.prior, max(sizes), stream)
    lw = compute_log_weights(samples, obs, config.model)
    for k, (m, m_t) in enumerate(zip(sizes, clip_counts)):
        try:
            is_est, nis_est = _estimate_pair(samples[:m], lw[:m], m_t)
        except DegenerateWeightsError:
            continue
        out[k, 0] = _record(is_est)
        out[k, 1] = _record(nis_est)
    return out


def _clipping_unit(config: ExperimentConfig, clip_counts: Sequence[int], unit) -> np.ndarray:
    """Records of shape ``(len(clip_counts), 5)`` for one (p, j) run."""
    p, j, obs = unit
    out = np.full((len(clip_counts), _REC), np.nan)
    stream = derive_stream(config.master_seed, p, j, StreamRole.SAMPLING)
    samples = sample_prior(config.prior, config.n_samples, stream)
    lw = compute_log_weights(samples, obs, config.model)
    for k, m_t in enumerate(clip_counts):
        try:
            out[k] = _record(summarize(nis_from_log_weights(samples, lw, m_t)))
        except DegenerateWeightsError:
            continue
    return out


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "").strip()
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ParameterError(f"${WORKERS_ENV} must be an integer, got {value!r}") from None


def _run_units(fn, units: list, workers: int) -> list:
    """Map ``fn`` over ``units`` preserving order, optionally in subprocesses."""
    if workers <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    chunk = max(1, len(units) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, units, chunksize=chunk))


def _grid_units(config: ExperimentConfig, n_observations: int) -> list:
    units = []
    for p in range(config.n_obs_realizations):
        obs = generate_observations(config, p, n_observations)
        units.extend((p, j, obs) for j in range(config.n_mc_trials))
    return units


def _reshape(records: list, config: ExperimentConfig) -> np.ndarray:
    arr = np.stack(records)
    return arr.reshape((config.n_obs_realizations, config.n_mc_trials) + arr.shape[1:])


def _cell(method, m, m_t, n, rec: np.ndarray) -> CellResult:
    return CellResult(method, m, m_t, n, rec[..., :3].copy(), rec[..., 3].copy(), rec[..., 4].copy())


def sweep_sample_size(config: ExperimentConfig, sample_sizes: Optional[Iterable[int]] = None,
                      workers: int = 1) -> List[CellResult]:
    """IS and NIS cells for each sample size, clip count set by ``config.clipping``.

    Cells are ordered by sample size, IS before NIS.
    """
    sizes = tuple(int(m) for m in (config.sample_sizes if sample_sizes is None else sample_sizes))
    if not sizes or min(sizes) < 2:
        raise ParameterError("sample sizes must be nonempty and each >= 2")
    clip_counts = tuple(resolve_clip_count(config.clipping, m) for m in sizes)
    n = config.n_observations
    log.info("sample-size sweep: M=%s, P=%d, J=%d, N=%d", sizes,
             config.n_obs_realizations, config.n_mc_trials, n)
    fn = partial(_sample_size_unit, config, sizes, clip_counts)
    rec = _reshape(_run_units(fn, _grid_units(config, n), workers), config)
    cells = []
    for k, (m, m_t) in enumerate(zip(sizes, clip_counts)):
        cells.append(_cell("IS", m, None, n, rec[:, :, k, 0]))
        cells.append(_cell("NIS", m, m_t, n, rec[:, :, k, 1]))
    return cells


def sweep_clipping(config: ExperimentConfig, clip_counts: Optional[Iterable[int]] = None,
                   obs_counts: Optional[Iterable[int]] = None, workers: int = 1) -> List[CellResult]:
    """NIS cells over the cross product of observation counts and clip counts.

    The sample size is ``config.n_samples``; cells are ordered by N, then M_T.
    A clip count of 1 reproduces plain IS.
    """
    m = config.n_samples
    m_ts = tuple(int(c) for c in (config.clip_counts if clip_counts is None else clip_counts))
    ns = tuple(int(c) for c in (config.obs_counts if obs_counts is None else obs_counts))
    if not m_ts or not ns:
        raise ParameterError("clip and observation counts must be nonempty")
    bad = [c for c in m_ts if not 1 <= c <= m - 1]
    if bad:
        raise ParameterError(f"clip counts {bad} outside [1, {m - 1}]")
    if min(ns) < 1:
        raise ParameterError("observation counts must be >= 1")
    cells = []
    fn = partial(_clipping_unit, config, m_ts)
    for n in ns:
        log.info("clipping sweep: N=%d, M=%d, M_T=%s", n, m, m_ts)
        rec = _reshape(_run_units(fn, _grid_units(config, n), workers), config)
        cells.extend(_cell("NIS", m, c, n, rec[:, :, k]) for k, c in enumerate(m_ts))
    return cells


def aggregate_cells(cells: Sequence[CellResult], config: ExperimentConfig) -> List[AggregateStats]:
    return [c.aggregate(config.model.means, config.bias_norm) for c in cells]
