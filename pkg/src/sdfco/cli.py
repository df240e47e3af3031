"""Command line runner: seeded experiments with manifest-stamped outputs.

Exit codes: 0 success, 2 configuration error, 3 at least one trial errored,
4 I/O failure.  ``SDFCO_MAX_THREADS`` caps the worker count requested via
``--jobs``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InputError, NumericError
from .experiments import (
    AIRCRAFT_PLOT_METRICS,
    AircraftConfig,
    DiskBenchmarkConfig,
    TrainSdfConfig,
    export_plot_data,
    run_aircraft,
    run_disk_benchmark,
    run_train_sdf,
    write_csv,
)
from .gp import GpConfig
from .solver import SolveOptions
from .training import TrainConfig

THREAD_ENV_VAR = "SDFCO_MAX_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRIAL = 3
EXIT_IO = 4

SOLVER_KEYS = (
    "feasibility_tol",
    "optimality_tol",
    "max_outer",
    "max_inner",
    "initial_penalty",
    "penalty_growth",
    "max_penalty",
)


def _check_keys(data: dict, allowed, context: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(unknown)}")


def _build(cls, data: dict, context: str, converters=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{context} section must be a JSON object")
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(data, names, context)
    kwargs = {}
    for name in names:
        if name not in data:
            continue
        value = data[name]
        if converters and name in converters:
            value = converters[name](value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {context} value: {exc}") from exc


def _train_config(data: dict) -> TrainConfig:
    converters = {
        "hidden_widths": lambda v: tuple(int(x) for x in v),
        "lr_range": lambda v: tuple(float(x) for x in v),
        "lower": lambda v: np.asarray(v, dtype=float),
        "upper": lambda v: np.asarray(v, dtype=float),
    }
    return _build(TrainConfig, data, "train", converters)


def _gp_config(data: dict) -> GpConfig:
    return _build(GpConfig, data, "gp")


def _solve_options(data: dict) -> SolveOptions:
    if not isinstance(data, dict):
        raise ConfigError("solver section must be a JSON object")
    _check_keys(data, SOLVER_KEYS, "solver")
    try:
        return SolveOptions(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver value: {exc}") from exc


def _disk_config(data: dict) -> DiskBenchmarkConfig:
    converters = {
        "dimensions": lambda v: tuple(int(x) for x in v),
        "methods": lambda v: tuple(str(x) for x in v),
        "train": _train_config,
    }
    return _build(DiskBenchmarkConfig, data, "disk-benchmark", converters)


def _aircraft_config(data: dict) -> AircraftConfig:
    converters = {
        "methods": lambda v: tuple(str(x) for x in v),
        "train": _train_config,
        "gp": _gp_config,
        "solver": _solve_options,
    }
    return _build(AircraftConfig, data, "aircraft", converters)


def _train_sdf_config(data: dict) -> TrainSdfConfig:
    return _build(TrainSdfConfig, data, "train-sdf", {"train": _train_config})


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be a JSON object")
    return data


def _apply_overrides(config, args) -> None:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "trials", None) is not None:
        config.trials = args.trials
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    cap = os.environ.get(THREAD_ENV_VAR)
    if cap is not None and hasattr(config, "jobs"):
        try:
            config.jobs = max(1, min(config.jobs, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"{THREAD_ENV_VAR} must be an integer: {exc}") from exc


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def _write_manifest(out_dir: Path, command: str, config) -> None:
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "seed": getattr(config, "seed", None),
        "version": __version__,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_table_command(command: str, args) -> int:
    data = _load_config(args.config)
    if command == "disk-benchmark":
        config = _disk_config(data)
        runner = run_disk_benchmark
    else:
        config = _aircraft_config(data)
        runner = run_aircraft
    _apply_overrides(config, args)
    config.validate()
    table = runner(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.write(out_dir / "rows.csv", out_dir / "summary.csv")
    _write_manifest(out_dir, command, config)
    if table.error_count:
        print(f"{table.error_count} trial(s) errored; see rows.csv", file=sys.stderr)
        return EXIT_TRIAL
    return EXIT_OK


def _run_train_sdf(args) -> int:
    config = _train_sdf_config(_load_config(args.config))
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    net, metrics = run_train_sdf(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    net.save(out_dir / "network.json")
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(metrics), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "train-sdf", config)
    return EXIT_OK


def _run_export_plots(args) -> int:
    path = Path(args.results)
    if path.is_dir():
        path = path / "summary.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        summary_rows = list(csv.DictReader(fh))
    if not summary_rows:
        raise InputError(f"no summary rows in {path}")
    rows = []
    if args.kind == "disk":
        for entry in summary_rows:
            rows.append(
                {
                    "x": entry["dimension"],
                    "method": entry["method"],
                    "mean": entry["mean_accuracy"],
                    "std": entry["std_accuracy"],
                }
            )
    else:
        for metric in AIRCRAFT_PLOT_METRICS:
            for entry in summary_rows:
                rows.append(
                    {
                        "x": metric,
                        "method": entry["method"],
                        "mean": entry[f"mean_{metric}"],
                        "std": entry[f"std_{metric}"],
                    }
                )
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "plot_data.csv"
    write_csv(out, ["x", "method", "mean", "std"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfco",
        description="Feasibility-surrogate optimization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p, with_trials: bool) -> None:
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        if with_trials:
            p.add_argument("--trials", type=int, help="trial count override")
            p.add_argument("--jobs", type=int, help="parallel worker cap")

    add_run_flags(sub.add_parser("disk-benchmark", help="classifier comparison"), True)
    add_run_flags(sub.add_parser("aircraft", help="method comparison study"), True)
    add_run_flags(sub.add_parser("train-sdf", help="train one surrogate"), False)

    plots = sub.add_parser("export-plots", help="reshape a summary into plot data")
    plots.add_argument("--results", type=Path, required=True, help="run directory or summary.csv")
    plots.add_argument("--kind", choices=("disk", "aircraft"), required=True)
    plots.add_argument("--out", type=Path, required=True, help="output directory or .csv path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("disk-benchmark", "aircraft"):
            return _run_table_command(args.command, args)
        if args.command == "train-sdf":
            return _run_train_sdf(args)
        return _run_export_plots(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, NumericError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_TRIAL
    except OSError as exc:
        filename = getattr(exc, "filename", None)
        where = f" ({filename})" if filename else ""
        print(f"i/o error{where}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
