"""INI configuration files for experiments.

Every key is optional; omitted keys take the defaults below, which are
the paper's model and prior with desk-scale trial counts.

.. code-block:: ini

    [model]
    means = 0, 2, 4
    coeff1 = 0.2
    coeff2 = 0.3
    variance = 1

    [prior]
    mean = 1, 1, 1
    variance = 10          ; defaults to 10 * model variance

    [experiment]
    n_observations = 1000
    n_samples = 1000
    n_obs_realizations = 25
    n_mc_trials = 200
    master_seed = 0
    bias_norm = l2         ; l2 | l1

    [clipping]
    policy = log           ; log | fixed
    count = 7              ; fixed policy only
    log_base = e           ; log policy only

    [sweep]
    sample_sizes = 100, 300, 1000, 3000, 10000
    clip_counts = 1-30
    obs_counts = 100, 300, 1000
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path
from typing import Dict, List, Union

from .core import GaussianPrior, GmmParams, ParameterError
from .experiment import ExperimentConfig
from .sampler import FixedClip, LogClip

SCHEMA: Dict[str, tuple] = {
    "model": ("means", "coeff1", "coeff2", "variance"),
    "prior": ("mean", "variance"),
    "experiment": ("n_observations", "n_samples", "n_obs_realizations", "n_mc_trials",
                   "master_seed", "bias_norm"),
    "clipping": ("policy", "count", "log_base"),
    "sweep": ("sample_sizes", "clip_counts", "obs_counts"),
}


class ConfigError(ValueError):
    """Configuration file is unreadable or fails validation."""

    def __init__(self, errors: Union[str, List[str]]):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


def _float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _int(raw: str) -> int:
    return int(raw.strip())


def _floats(raw: str) -> List[float]:
    return [_float(tok) for tok in raw.split(",") if tok.strip()]


def _ints(raw: str) -> List[int]:
    """Comma list of integers; ``a-b`` expands to the inclusive range."""
    out: List[int] = []
    for tok in (t.strip() for t in raw.split(",")):
        if not tok:
            continue
        if "-" in tok:
            lo_i, hi_i = (int(v) for v in tok.split("-", 1))
            if hi_i < lo_i:
                raise ValueError(f"empty range {tok!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            out.append(int(tok))
    if not out:
        raise ValueError("must list at least one integer")
    return out


def _log_base(raw: str) -> float:
    return math.e if raw.strip().lower() == "e" else _float(raw)


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    errors: List[str] = []
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"[{section}]: unknown section")
            continue
        for key in parser[section]:
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown key")

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            errors.append(f"{section}.{key}: cannot parse {raw!r} ({exc})")
            return default

    means = get("model", "means", _floats, [0.0, 2.0, 4.0])
    coeff1 = get("model", "coeff1", _float, 0.2)
    coeff2 = get("model", "coeff2", _float, 0.3)
    variance = get("model", "variance", _float, 1.0)
    prior_mean = get("prior", "mean", _floats, [1.0, 1.0, 1.0])
    prior_var = get("prior", "variance", _float, None)

    ex = {}
    for key, default in (("n_observations", 1000), ("n_samples", 1000), ("n_obs_realizations", 25),
                         ("n_mc_trials", 200), ("master_seed", 0)):
        ex[key] = get("experiment", key, _int, default)
    ex["bias_norm"] = get("experiment", "bias_norm", lambda s: s.strip().lower(), "l2")

    policy_name = get("clipping", "policy", lambda s: s.strip().lower(), "log")
    count = get("clipping", "count", _int, 7)
    base = get("clipping", "log_base", _log_base, math.e)

    sweep = {}
    for key, default in (("sample_sizes", (100, 300, 1000, 3000, 10000)),
                         ("clip_counts", tuple(range(1, 31))), ("obs_counts", (100, 300, 1000))):
        sweep[key] = tuple(get("sweep", key, _ints, default))

    if errors:
        raise ConfigError(errors)

    def build(field_name, factory):
        try:
            return factory()
        except ParameterError as exc:
            errors.append(f"{field_name}: {exc}")
            return None

    model = build("model", lambda: GmmParams(means, coeff1, coeff2, variance))
    prior = build("prior", lambda: GaussianPrior(
        prior_mean, 10.0 * variance if prior_var is None else prior_var))
    if policy_name == "log":
        clipping = build("clipping.log_base", lambda: LogClip(base))
    elif policy_name == "fixed":
        clipping = build("clipping.count", lambda: FixedClip(count))
    else:
        errors.append(f"clipping.policy: expected 'log' or 'fixed', got {policy_name!r}")
        clipping = None
    if errors:
        raise ConfigError(errors)
    config = build("experiment", lambda: ExperimentConfig(
        model=model, prior=prior, clipping=clipping, **ex, **sweep))
    if errors:
        raise ConfigError(errors)
    return config


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file; defaults fill every omitted key."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _fmt(v: float) -> str:
    return repr(float(v))


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize ``config`` so that :func:`parse_config_text` reproduces it exactly."""
    m, pr = config.model, config.prior
    lines = [
        "[model]",
        "means = " + ", ".join(_fmt(v) for v in m.means),
        f"coeff1 = {_fmt(m.coeff1)}",
        f"coeff2 = {_fmt(m.coeff2)}",
        f"variance = {_fmt(m.variance)}",
        "",
        "[prior]",
        "mean = " + ", ".join(_fmt(v) for v in pr.mean),
        f"variance = {_fmt(pr.variance)}",
        "",
        "[experiment]",
        f"n_observations = {config.n_observations}",
        f"n_samples = {config.n_samples}",
        f"n_obs_realizations = {config.n_obs_realizations}",
        f"n_mc_trials = {config.n_mc_trials}",
        f"master_seed = {config.master_seed}",
        f"bias_norm = {config.bias_norm}",
        "",
        "[clipping]",
    ]
    if isinstance(config.clipping, FixedClip):
        lines += ["policy = fixed", f"count = {config.clipping.count}"]
    else:
        lines += ["policy = log", f"log_base = {_fmt(config.clipping.base)}"]
    lines += [
        "",
        "[sweep]",
        "sample_sizes = " + ", ".join(map(str, config.sample_sizes)),
        "clip_counts = " + ", ".join(map(str, config.clip_counts)),
        "obs_counts = " + ", ".join(map(str, config.obs_counts)),
        "",
    ]
    return "\n".join(lines)
