"""Benchmark drivers: feasibility-classifier comparison and aircraft study.

Each driver returns a ResultTable holding per-trial rows plus a mean/std
summary, both writable as deterministic CSV.  Trials are independent and may
run on a thread pool; results are merged in submission order so the output
files do not depend on the worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .co import iterations_to_tolerance, run_direct_co, run_surrogate_co
from .errors import ConfigError, InputError
from .gp import GpConfig
from .losses import JFIT_THRESHOLD, classify, load_dataset
from .nn import Network
from .problems.aircraft import build_aircraft_problem
from .problems.disk import BOX_HALF_WIDTH, make_disk_dataset
from .solver import SolveOptions
from .training import TrainConfig, train_baseline, train_sdf

DISK_METHODS = ("jfit", "hinge", "hybrid", "sdf")
AIRCRAFT_METHODS = ("direct", "gp", "sdf")
OPTIMAL_SPEED = 13.71

DISK_COLUMNS = ["dimension", "method", "trial", "seed", "status", "accuracy"]
DISK_SUMMARY_COLUMNS = [
    "dimension",
    "method",
    "trials",
    "failures",
    "mean_accuracy",
    "std_accuracy",
]
AIRCRAFT_COLUMNS = [
    "method",
    "trial",
    "seed",
    "status",
    "iterations",
    "aero_evaluations",
    "propulsion_evaluations",
    "final_objective",
]
AIRCRAFT_SUMMARY_COLUMNS = [
    "method",
    "trials",
    "failures",
    "median_iterations",
    "mean_iterations",
    "std_iterations",
    "mean_aero_evaluations",
    "std_aero_evaluations",
    "mean_propulsion_evaluations",
    "std_propulsion_evaluations",
]
AIRCRAFT_PLOT_METRICS = ("iterations", "aero_evaluations", "propulsion_evaluations")


def _default_train_config() -> TrainConfig:
    return TrainConfig(hidden_widths=(12, 12, 12))


@dataclass
class DiskBenchmarkConfig:
    """Classifier comparison on the hypersphere sets, one row per training."""

    dimensions: tuple[int, ...] = (2, 4, 6, 8)
    methods: tuple[str, ...] = DISK_METHODS
    trials: int = 5
    seed: int = 0
    n_train: int = 50
    n_test: int = 500
    train: TrainConfig = field(default_factory=_default_train_config)
    jobs: int = 1

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("method list cannot be empty")
        for method in self.methods:
            if method not in DISK_METHODS:
                raise ConfigError(f"unknown disk method {method!r}")
        if not self.dimensions or any(d < 1 for d in self.dimensions):
            raise ConfigError("dimensions must be a nonempty list of positive ints")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("dataset sizes must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


@dataclass
class AircraftConfig:
    """Aircraft comparison: every method reuses the same per-trial seed."""

    methods: tuple[str, ...] = AIRCRAFT_METHODS
    trials: int = 20
    seed: int = 0
    # surrogate loop budgets, sized with headroom over the expected medians
    sdf_max_iter: int = 20
    gp_max_iter: int = 60
    n_ini: int = 1
    train: TrainConfig = field(default_factory=_default_train_config)
    gp: GpConfig = field(default_factory=GpConfig)
    solver: SolveOptions | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("method list cannot be empty")
        for method in self.methods:
            if method not in AIRCRAFT_METHODS:
                raise ConfigError(f"unknown aircraft method {method!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.sdf_max_iter < 1 or self.gp_max_iter < 1:
            raise ConfigError("iteration budgets must be at least 1")
        if self.n_ini < 1:
            raise ConfigError("n_ini must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


@dataclass
class TrainSdfConfig:
    """Single surrogate training; data is generated or loaded from CSV."""

    dimension: int = 2
    n_train: int = 50
    n_test: int = 500
    seed: int = 0
    dataset: str | None = None
    train: TrainConfig = field(default_factory=_default_train_config)

    def validate(self) -> None:
        if self.dataset is None and self.dimension < 1:
            raise ConfigError("dimension must be at least 1")
        if self.dataset is None and (self.n_train < 1 or self.n_test < 0):
            raise ConfigError("dataset sizes must be positive")


@dataclass
class ResultTable:
    kind: str
    columns: list[str]
    rows: list[dict]
    summary_columns: list[str]
    summary_rows: list[dict]

    @property
    def error_count(self) -> int:
        return sum(1 for row in self.rows if str(row.get("status", "")).startswith("error"))

    def write(self, rows_path, summary_path) -> None:
        write_csv(rows_path, self.columns, self.rows)
        write_csv(summary_path, self.summary_columns, self.summary_rows)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in columns])


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _map_trials(worker, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


def _mean_std(values: list[float]) -> tuple[float, float]:
    data = np.asarray(values, dtype=float)
    return float(np.mean(data)), float(np.std(data))


# -- classifier benchmark -------------------------------------------------


def _accuracy(net: Network, test_set, threshold: float) -> float:
    hits = sum(
        1 for sample in test_set if classify(net, sample.point, threshold) == sample.feasible
    )
    return hits / len(test_set)


def _disk_trial(task) -> dict:
    config, dimension, method, trial, test_set = task
    data_seed = _derived_seed(config.seed, 1, dimension, trial)
    row = {
        "dimension": dimension,
        "method": method,
        "trial": trial,
        "seed": data_seed,
        "status": "ok",
        "accuracy": None,
    }
    try:
        train_set, _ = make_disk_dataset(dimension, config.n_train, 0, seed=data_seed)
        bounds = np.full(dimension, BOX_HALF_WIDTH)
        net_seed = _derived_seed(config.seed, 2, dimension, trial, DISK_METHODS.index(method))
        train_config = replace(
            config.train, lower=-bounds, upper=bounds, seed=net_seed
        )
        if method == "sdf":
            net = train_sdf(train_set, train_config)
            threshold = 0.0
        else:
            net = train_baseline(train_set, method, train_config)
            threshold = JFIT_THRESHOLD if method == "jfit" else 0.0
        row["accuracy"] = _accuracy(net, test_set, threshold)
    except Exception as exc:  # noqa: BLE001 - failed trials become rows
        row["status"] = f"error: {exc}"
    return row


def run_disk_benchmark(config: DiskBenchmarkConfig) -> ResultTable:
    """Train every method on fresh 50-point sets, score on a fixed test set."""
    config.validate()
    tasks = []
    for dimension in config.dimensions:
        test_seed = _derived_seed(config.seed, 0, dimension)
        _, test_set = make_disk_dataset(dimension, 0, config.n_test, seed=test_seed)
        for trial in range(config.trials):
            for method in config.methods:
                tasks.append((config, dimension, method, trial, test_set))
    rows = _map_trials(_disk_trial, tasks, config.jobs)

    summary_rows = []
    for dimension in config.dimensions:
        for method in config.methods:
            scores = [
                row["accuracy"]
                for row in rows
                if row["dimension"] == dimension
                and row["method"] == method
                and row["status"] == "ok"
            ]
            entry = {
                "dimension": dimension,
                "method": method,
                "trials": config.trials,
                "failures": config.trials - len(scores),
                "mean_accuracy": None,
                "std_accuracy": None,
            }
            if scores:
                entry["mean_accuracy"], entry["std_accuracy"] = _mean_std(scores)
            summary_rows.append(entry)
    return ResultTable("disk", DISK_COLUMNS, rows, DISK_SUMMARY_COLUMNS, summary_rows)


# -- aircraft comparison --------------------------------------------------


def _aircraft_trial(task) -> dict:
    config, method, trial = task
    seed = config.seed + trial
    row = {
        "method": method,
        "trial": trial,
        "seed": seed,
        "status": "ok",
        "iterations": None,
        "aero_evaluations": None,
        "propulsion_evaluations": None,
        "final_objective": None,
    }
    try:
        problem = build_aircraft_problem()
        if method == "direct":
            history = run_direct_co(problem, seed=seed, solve_options=config.solver)
        else:
            budget = config.sdf_max_iter if method == "sdf" else config.gp_max_iter
            history = run_surrogate_co(
                problem,
                surrogate=method,
                n_ini=config.n_ini,
                max_iter=budget,
                seed=seed,
                train_config=config.train,
                gp_config=config.gp,
            )
        if not history.records:
            row["status"] = history.status
            return row
        row["final_objective"] = history.records[-1].objective_value
        reached = iterations_to_tolerance(history, f_star=-OPTIMAL_SPEED)
        if reached is None:
            # cost columns then report the whole unsuccessful run
            row["status"] = history.status
            counts = history.records[-1].evaluation_counts
        else:
            row["iterations"] = reached
            counts = history.records[reached - 1].evaluation_counts
        row["aero_evaluations"] = counts.get("aero")
        row["propulsion_evaluations"] = counts.get("propulsion")
    except Exception as exc:  # noqa: BLE001 - failed trials become rows
        row["status"] = f"error: {exc}"
    return row


def run_aircraft(config: AircraftConfig) -> ResultTable:
    """Compare solution methods over shared-seed trials, Table-style summary.

    A trial counts as solved when it reaches 5% of the reference speed while
    truly feasible; its cost columns are the iteration count and cumulative
    per-discipline evaluations up to that point.
    """
    config.validate()
    tasks = [
        (config, method, trial)
        for method in config.methods
        for trial in range(config.trials)
    ]
    rows = _map_trials(_aircraft_trial, tasks, config.jobs)

    summary_rows = []
    for method in config.methods:
        solved = [
            row
            for row in rows
            if row["method"] == method and row["iterations"] is not None
        ]
        entry = {
            "method": method,
            "trials": config.trials,
            "failures": config.trials - len(solved),
        }
        for column in AIRCRAFT_SUMMARY_COLUMNS[3:]:
            entry[column] = None
        if solved:
            iterations = [row["iterations"] for row in solved]
            entry["median_iterations"] = float(np.median(iterations))
            entry["mean_iterations"], entry["std_iterations"] = _mean_std(iterations)
            for metric in ("aero_evaluations", "propulsion_evaluations"):
                entry[f"mean_{metric}"], entry[f"std_{metric}"] = _mean_std(
                    [row[metric] for row in solved]
                )
        summary_rows.append(entry)
    return ResultTable(
        "aircraft", AIRCRAFT_COLUMNS, rows, AIRCRAFT_SUMMARY_COLUMNS, summary_rows
    )


# -- single surrogate training --------------------------------------------


def run_train_sdf(config: TrainSdfConfig) -> tuple[Network, dict]:
    """Train one distance surrogate and report basic quality metrics."""
    config.validate()
    if config.dataset is not None:
        train_set = load_dataset(config.dataset)
        test_set = []
        train_config = replace(config.train, seed=config.seed)
    else:
        data_seed = _derived_seed(config.seed, 1, config.dimension, 0)
        train_set, test_set = make_disk_dataset(
            config.dimension, config.n_train, config.n_test, seed=data_seed
        )
        bounds = np.full(config.dimension, BOX_HALF_WIDTH)
        train_config = replace(
            config.train, lower=-bounds, upper=bounds, seed=config.seed
        )
    net = train_sdf(train_set, train_config)
    metrics = {
        "dimension": net.input_dim,
        "n_train": len(train_set),
        "train_accuracy": _accuracy(net, train_set, 0.0),
    }
    if test_set:
        metrics["test_accuracy"] = _accuracy(net, test_set, 0.0)
    return net, metrics


# -- plot data export ------------------------------------------------------


def export_plot_data(table: ResultTable, path) -> None:
    """Tidy mean/std rows, one per (x, method); header fixed to x,method,mean,std."""
    if not table.summary_rows:
        raise InputError("cannot export plot data from an empty table")
    rows = []
    if table.kind == "disk":
        for entry in table.summary_rows:
            rows.append(
                {
                    "x": entry["dimension"],
                    "method": entry["method"],
                    "mean": entry["mean_accuracy"],
                    "std": entry["std_accuracy"],
                }
            )
    elif table.kind == "aircraft":
        for metric in AIRCRAFT_PLOT_METRICS:
            for entry in table.summary_rows:
                rows.append(
                    {
                        "x": metric,
                        "method": entry["method"],
                        "mean": entry[f"mean_{metric}"],
                        "std": entry[f"std_{metric}"],
                    }
                )
    else:
        raise InputError(f"no plot export for table kind {table.kind!r}")
    write_csv(path, ["x", "method", "mean", "std"], rows)
