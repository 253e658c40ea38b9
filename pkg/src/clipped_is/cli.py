"""Command-line front end.

Subcommands::

    clipped-is generate-obs   --config C --out obs.csv
    clipped-is sweep-samples  --config C --out DIR
    clipped-is sweep-clipping --config C --out DIR

Every run writes a JSON manifest next to its outputs; passing it back with
``--from-manifest`` reproduces the CSV files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, config_to_text, parse_config, parse_config_text
from .core import ParameterError
from .experiment import (
    WORKERS_ENV,
    CellResult,
    ExperimentConfig,
    aggregate_cells,
    default_workers,
    generate_observations,
    sweep_clipping,
    sweep_sample_size,
)

log = logging.getLogger("clipped_is")

AGGREGATE_COLUMNS = ["method", "M", "M_T", "N", "P", "J", "bias", "variance", "mse",
                     "mean_max_weight", "mean_ess", "n_failed"]
TRIAL_COLUMNS = ["method", "M", "M_T", "N", "obs_idx", "trial_idx", "xhat_1", "xhat_2", "xhat_3",
                 "max_weight", "ess"]
MANIFEST_NAME = "manifest.json"

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def fmt(value) -> str:
    """CSV cell text: round-trippable floats (17 significant digits), empty for None."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def aggregate_rows(cells: List[CellResult], config: ExperimentConfig):
    for s in aggregate_cells(cells, config):
        yield [getattr(s, c) for c in AGGREGATE_COLUMNS]


def trial_rows(cells: List[CellResult]):
    for c in cells:
        P, J = c.max_weights.shape
        for p in range(P):
            for j in range(J):
                if np.isnan(c.max_weights[p, j]):
                    continue
                x = c.estimates[p, j]
                yield [c.method, c.M, c.M_T, c.N, p, j, x[0], x[1], x[2],
                       c.max_weights[p, j], c.ess[p, j]]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def manifest(command: str, config: ExperimentConfig, started: str,
             cells: Optional[List[CellResult]] = None, outputs: Sequence[str] = ()) -> dict:
    doc = {
        "tool": "clipped_is",
        "version": __version__,
        "command": command,
        "master_seed": config.master_seed,
        "config": config_to_text(config),
        "started": started,
        "finished": _now(),
        "outputs": list(outputs),
    }
    if cells is not None:
        doc["cells"] = [
            {"method": c.method, "M": c.M, "M_T": c.M_T, "N": c.N,
             "n_success": int((~c.failed).sum()), "n_failed": int(c.failed.sum())}
            for c in cells
        ]
    return doc


def load_manifest(path, command: str) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if doc.get("command") != command:
        raise ConfigError(f"manifest was written by {doc.get('command')!r}, not {command!r}")
    if "config" not in doc:
        raise ConfigError("manifest has no config snapshot")
    return parse_config_text(doc["config"])


def resolve_config(args) -> ExperimentConfig:
    if args.from_manifest and args.config:
        raise ConfigError("--config and --from-manifest are mutually exclusive")
    if args.from_manifest:
        config = load_manifest(args.from_manifest, args.command)
    elif args.config:
        config = parse_config(args.config)
    else:
        config = ExperimentConfig()
    if args.seed is not None:
        try:
            config = replace(config, master_seed=args.seed)
        except ParameterError as exc:
            raise ConfigError(f"--seed: {exc}") from None
    return config


def cmd_generate_obs(args) -> int:
    started = _now()
    config = resolve_config(args)
    out = Path(args.out)
    y = generate_observations(config, args.realization)
    write_atomic(out, csv_text(["index", "y"], ([i, v] for i, v in enumerate(y))))
    doc = manifest(args.command, config, started, outputs=[out.name])
    doc["realization"] = args.realization
    write_atomic(out.with_name(out.name + ".manifest.json"), json.dumps(doc, indent=2) + "\n")
    log.info("wrote %d observations to %s", len(y), out)
    return EXIT_OK


def _write_sweep(args, config, cells, started) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "aggregate.csv", csv_text(AGGREGATE_COLUMNS, aggregate_rows(cells, config)))
    write_atomic(out / "trials.csv", csv_text(TRIAL_COLUMNS, trial_rows(cells)))
    doc = manifest(args.command, config, started, cells, ["aggregate.csv", "trials.csv"])
    write_atomic(out / MANIFEST_NAME, json.dumps(doc, indent=2) + "\n")
    log.info("wrote %d cells to %s", len(cells), out)
    return EXIT_OK


def cmd_sweep_samples(args) -> int:
    started = _now()
    config = resolve_config(args)
    cells = sweep_sample_size(config, workers=args.workers)
    return _write_sweep(args, config, cells, started)


def cmd_sweep_clipping(args) -> int:
    started = _now()
    config = resolve_config(args)
    cells = sweep_clipping(config, workers=args.workers)
    return _write_sweep(args, config, cells, started)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipped-is",
        description="Importance sampling with clipped weights on a Gaussian-mixture posterior.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="INI config file (defaults used when omitted)")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--from-manifest", help="rerun from a manifest written by a previous run")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("generate-obs", help="write one realization of observations to CSV")
    common(p, "output CSV path")
    p.add_argument("--realization", type=int, default=0,
                   help="observation realization index (default 0, as used by the sweeps)")
    p.set_defaults(func=cmd_generate_obs)

    for name, func, what in (("sweep-samples", cmd_sweep_samples, "sample sizes"),
                             ("sweep-clipping", cmd_sweep_clipping, "clip counts and observation counts")):
        p = sub.add_parser(name, help=f"run the IS/NIS grid over {what}")
        common(p, "output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${WORKERS_ENV} or 1); results do not depend on it")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "workers", 1) is None:
            args.workers = default_workers()
        if getattr(args, "workers", 1) < 1:
            raise ParameterError("--workers must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
