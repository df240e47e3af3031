"""Collaborative optimization: disciplines, subspace projections, system loops.

The system level owns the shared variables z and minimizes f(z) subject to
every discipline being able to realize z.  Each discipline measures that by
projecting z onto its feasible set; the squared projection distance must
fall below a relaxation threshold.  Two system strategies are provided:
nesting the projections directly inside the constrained solver, and a
surrogate-assisted loop that refits a cheap feasibility model per discipline
(a Lipschitz signed-distance network or a Gaussian process on the squared
distances) at every iteration and only evaluates the true projections at the
proposed candidates.
"""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InputError, NumericError
from .gp import GpConfig, GpModel, fit_gp, posterior
from .losses import LabeledSample
from .solver import (
    CONVERGED,
    MAX_ITER,
    NUMERIC_ERROR,
    NlpProblem,
    SolveOptions,
    multistart_solve,
    solve,
)
from .training import TrainConfig, train_sdf

# squared distance below which a sample is labeled in-set for training
FEASIBLE_LABEL_THRESHOLD = 1e-6
# allowed squared projection distance at the system level
SYSTEM_RELAXATION = 1e-4
# looser feasibility check used in reports, absorbing solver noise
TRUE_FEASIBILITY_TOL = 1e-3
GP_FEASIBILITY_THRESHOLD = 1e-4


@dataclass
class DisciplineEvaluation:
    """Constraint values and Jacobians at one (shared, local) point."""

    eq: np.ndarray
    eq_jac_shared: np.ndarray
    eq_jac_local: np.ndarray
    ineq: np.ndarray
    ineq_jac_shared: np.ndarray
    ineq_jac_local: np.ndarray


class Discipline(ABC):
    """One discipline: local variables plus constraints over (shared, local).

    ``evaluate`` is the only entry point the solvers use; it increments the
    evaluation counter once per requested constraint-set evaluation, which is
    the unit reported in experiment tables.
    """

    def __init__(
        self,
        name: str,
        local_lower: np.ndarray,
        local_upper: np.ndarray,
        shared_lower: np.ndarray | None = None,
        shared_upper: np.ndarray | None = None,
    ):
        self.name = name
        self.local_lower = np.asarray(local_lower, dtype=float)
        self.local_upper = np.asarray(local_upper, dtype=float)
        self.shared_lower = None if shared_lower is None else np.asarray(shared_lower, dtype=float)
        self.shared_upper = None if shared_upper is None else np.asarray(shared_upper, dtype=float)
        self.evaluation_count = 0

    @property
    def n_local(self) -> int:
        return self.local_lower.shape[0]

    def evaluate(self, shared: np.ndarray, local: np.ndarray) -> DisciplineEvaluation:
        self.evaluation_count += 1
        return self._constraints(
            np.asarray(shared, dtype=float), np.asarray(local, dtype=float)
        )

    @abstractmethod
    def _constraints(self, shared: np.ndarray, local: np.ndarray) -> DisciplineEvaluation:
        ...


@dataclass
class CoProblem:
    """System-level problem: shared box, objective with gradient, disciplines."""

    shared_names: tuple
    shared_units: tuple
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    disciplines: list
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.shared_names)

    def validate(self) -> None:
        if len(self.shared_units) != self.dim:
            raise InputError("one unit per shared variable required")
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise InputError("shared bounds must match the number of shared variables")
        if not self.disciplines:
            raise InputError("at least one discipline required")


@dataclass
class SubspaceResult:
    """Projection of a shared-variable target onto one discipline's feasible set."""

    sq_distance: float
    projection: np.ndarray
    distance_grad: np.ndarray | None
    local_values: np.ndarray
    status: str
    evaluations: int

    @property
    def feasible(self) -> bool:
        return self.sq_distance <= FEASIBLE_LABEL_THRESHOLD


def _subspace_options() -> SolveOptions:
    return SolveOptions(
        feasibility_tol=1e-8,
        optimality_tol=1e-8,
        max_outer=25,
        max_inner=300,
    )


def evaluate_subspace(
    discipline: Discipline,
    target: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    restarts: int = 3,
    seed: int = 0,
    options: SolveOptions | None = None,
) -> SubspaceResult:
    """Find the feasible point of one discipline closest to the target.

    Minimizes the squared distance between a local copy of the shared
    variables and the target, over the copy and the discipline's local
    variables, from ``restarts`` start points (the target itself plus
    seeded uniform draws).  Repeated constraint requests at the same point
    are served from a memo, so the discipline's evaluation counter reflects
    distinct points visited.
    """
    target = np.asarray(target, dtype=float)
    lower = discipline.shared_lower if lower is None else np.asarray(lower, dtype=float)
    upper = discipline.shared_upper if upper is None else np.asarray(upper, dtype=float)
    if lower is None or upper is None:
        raise InputError("shared bounds are required for the subspace search")
    dim = target.shape[0]
    n_local = discipline.n_local
    options = options or _subspace_options()

    cache: dict = {}

    def lookup(x: np.ndarray) -> DisciplineEvaluation:
        key = x.tobytes()
        found = cache.get(key)
        if found is None:
            found = discipline.evaluate(x[:dim], x[dim:])
            cache[key] = found
        return found

    def objective(x):
        diff = x[:dim] - target
        grad = np.zeros(dim + n_local)
        grad[:dim] = 2.0 * diff
        return float(diff @ diff), grad

    def equality(x):
        ev = lookup(x)
        return ev.eq, np.hstack([ev.eq_jac_shared, ev.eq_jac_local])

    def inequality(x):
        ev = lookup(x)
        return ev.ineq, np.hstack([ev.ineq_jac_shared, ev.ineq_jac_local])

    joint_lower = np.concatenate([lower, discipline.local_lower])
    joint_upper = np.concatenate([upper, discipline.local_upper])
    nlp = NlpProblem(
        dim=dim + n_local,
        objective=objective,
        equality=equality,
        inequality=inequality,
        lower=joint_lower,
        upper=joint_upper,
        name=discipline.name,
    )

    rng = np.random.default_rng(seed)
    starts = [
        np.concatenate(
            [
                np.clip(target, lower, upper),
                0.5 * (discipline.local_lower + discipline.local_upper),
            ]
        )
    ]
    for _ in range(restarts - 1):
        starts.append(rng.uniform(joint_lower, joint_upper))

    count_before = discipline.evaluation_count
    best = None
    best_key = None
    for x0 in starts:
        solution = solve(nlp, x0, options)
        if solution.status == NUMERIC_ERROR and not np.isfinite(solution.objective_value):
            continue
        feasible = solution.max_violation <= 1e-6 and solution.status != NUMERIC_ERROR
        key = (0, solution.objective_value) if feasible else (1, solution.max_violation)
        if best is None or key < best_key:
            best = solution
            best_key = key
    evaluations = discipline.evaluation_count - count_before
    if best is None:
        raise NumericError(f"{discipline.name}: all subspace solves failed numerically")

    sq_distance = max(float(best.objective_value), 0.0)
    projection = best.x[:dim].copy()
    if sq_distance > FEASIBLE_LABEL_THRESHOLD:
        distance_grad = (target - projection) / np.sqrt(sq_distance)
    else:
        distance_grad = None
    return SubspaceResult(
        sq_distance=sq_distance,
        projection=projection,
        distance_grad=distance_grad,
        local_values=best.x[dim:].copy(),
        status=best.status,
        evaluations=evaluations,
    )


@dataclass
class IterationRecord:
    index: int
    candidate: np.ndarray
    objective_value: float
    subspaces: dict
    evaluation_counts: dict
    surrogate_feasible: bool | None
    truly_feasible: bool
    note: str = ""

    @property
    def max_sq_distance(self) -> float:
        return max(r.sq_distance for r in self.subspaces.values())


@dataclass
class RunHistory:
    problem_name: str
    method: str
    seed: int
    records: list = field(default_factory=list)
    status: str = MAX_ITER

    @property
    def final_record(self):
        return self.records[-1] if self.records else None

    def evaluation_counts(self) -> dict:
        if not self.records:
            return {}
        return dict(self.records[-1].evaluation_counts)

    def to_csv(self, path, shared_names=None) -> None:
        if not self.records:
            raise InputError("cannot serialize an empty history")
        first = self.records[0]
        dim = first.candidate.shape[0]
        names = list(shared_names) if shared_names else [f"z{i}" for i in range(dim)]
        disciplines = list(first.subspaces.keys())
        header = (
            ["iteration"]
            + names
            + ["objective"]
            + [f"sq_distance_{d}" for d in disciplines]
            + [f"evaluations_{d}" for d in disciplines]
            + ["surrogate_feasible", "truly_feasible", "note"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.records:
                row = [rec.index]
                row += [repr(float(v)) for v in rec.candidate]
                row.append(repr(float(rec.objective_value)))
                row += [repr(float(rec.subspaces[d].sq_distance)) for d in disciplines]
                row += [rec.evaluation_counts[d] for d in disciplines]
                flag = "" if rec.surrogate_feasible is None else str(rec.surrogate_feasible).lower()
                row += [flag, str(rec.truly_feasible).lower(), rec.note]
                writer.writerow(row)

    def summary(self, f_star: float | None = None, rel_tol: float = 0.05) -> dict:
        out = {
            "status": self.status,
            "iterations": len(self.records),
            "evaluation_counts": self.evaluation_counts(),
        }
        if self.records:
            final = self.records[-1]
            out["final_objective"] = float(final.objective_value)
            out["final_candidate"] = [float(v) for v in final.candidate]
        if f_star is not None:
            out["iterations_to_tolerance"] = iterations_to_tolerance(self, f_star, rel_tol)
        return out

    def save_summary(self, path, f_star: float | None = None, rel_tol: float = 0.05) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(f_star, rel_tol), fh, indent=2, sort_keys=True)
            fh.write("\n")


def iterations_to_tolerance(
    history: RunHistory,
    f_star: float,
    rel_tol: float = 0.05,
    feasibility_tol: float = TRUE_FEASIBILITY_TOL,
):
    """Index of the first truly feasible record within rel_tol of f_star, or None."""
    if f_star == 0.0:
        raise InputError("reference objective must be nonzero")
    for rec in history.records:
        if rec.max_sq_distance > feasibility_tol:
            continue
        if abs(rec.objective_value - f_star) <= rel_tol * abs(f_star):
            return rec.index
    return None


def _record(
    problem: CoProblem,
    records: list,
    candidate: np.ndarray,
    results: dict,
    surrogate_feasible,
    note: str = "",
) -> IterationRecord:
    value, _ = problem.objective(candidate)
    counts = {d.name: d.evaluation_count for d in problem.disciplines}
    truly = max(r.sq_distance for r in results.values()) <= TRUE_FEASIBILITY_TOL
    rec = IterationRecord(
        index=len(records) + 1,
        candidate=np.asarray(candidate, dtype=float).copy(),
        objective_value=float(value),
        subspaces=results,
        evaluation_counts=counts,
        surrogate_feasible=surrogate_feasible,
        truly_feasible=truly,
        note=note,
    )
    records.append(rec)
    return rec


def run_direct_co(
    problem: CoProblem,
    seed: int = 0,
    relaxation: float = SYSTEM_RELAXATION,
    solve_options: SolveOptions | None = None,
    subspace_restarts: int = 3,
) -> RunHistory:
    """Hand the system problem with projection constraints straight to the solver.

    Every constraint evaluation triggers the true subspace projections, so
    this is the expensive reference strategy; the history records one entry
    per system-level iterate.
    """
    problem.validate()
    history = RunHistory(problem.name, "direct", seed)
    rng = np.random.default_rng(seed)
    z0 = rng.uniform(problem.lower, problem.upper)

    cache: dict = {}

    def project_all(z: np.ndarray) -> dict:
        key = z.tobytes()
        found = cache.get(key)
        if found is None:
            found = {
                d.name: evaluate_subspace(
                    d, z, problem.lower, problem.upper, restarts=subspace_restarts
                )
                for d in problem.disciplines
            }
            cache[key] = found
        return found

    def inequality(z):
        results = project_all(z)
        values = np.array(
            [results[d.name].sq_distance - relaxation for d in problem.disciplines]
        )
        jac = np.stack(
            [2.0 * (z - results[d.name].projection) for d in problem.disciplines]
        )
        return values, jac

    def on_iterate(z):
        try:
            results = project_all(z)
        except NumericError:
            return
        _record(problem, history.records, z, results, None)

    options = solve_options or SolveOptions(
        feasibility_tol=1e-6,
        optimality_tol=1e-6,
        max_outer=20,
        max_inner=200,
    )
    options = replace(options, iterate_callback=on_iterate, track_iterates=False)
    nlp = NlpProblem(
        dim=problem.dim,
        objective=problem.objective,
        inequality=inequality,
        lower=problem.lower,
        upper=problem.upper,
        name=problem.name,
    )
    solution = solve(nlp, z0, options)
    history.status = solution.status
    return history


def _subspace_to_sample(z: np.ndarray, result: SubspaceResult) -> LabeledSample:
    if result.feasible:
        return LabeledSample(
            point=z.copy(), feasible=True, sq_distance=result.sq_distance
        )
    return LabeledSample(
        point=z.copy(),
        feasible=False,
        sq_distance=result.sq_distance,
        projection=result.projection.copy(),
        distance_grad=result.distance_grad.copy(),
    )


class _SdfSurrogates:
    """Per-discipline signed-distance networks refit on the full dataset."""

    def __init__(self, problem: CoProblem, train_config: TrainConfig):
        self.problem = problem
        self.base_config = replace(
            train_config, lower=problem.lower.copy(), upper=problem.upper.copy()
        )
        self.networks = {}

    def fit(self, datasets: dict, seeds: dict) -> None:
        self.networks = {}
        for disc in self.problem.disciplines:
            config = replace(self.base_config, seed=seeds[disc.name])
            self.networks[disc.name] = train_sdf(datasets[disc.name], config)

    def constraint(self, z: np.ndarray):
        values = np.empty(len(self.networks))
        jac = np.empty((len(self.networks), z.shape[0]))
        for i, disc in enumerate(self.problem.disciplines):
            value, grad = self.networks[disc.name].value_and_grad(z)
            values[i] = value
            jac[i] = grad
        return values, jac


class _GpSurrogates:
    """Per-discipline GPs on squared distances with gradient observations."""

    def __init__(self, problem: CoProblem, gp_config: GpConfig):
        self.problem = problem
        self.config = gp_config
        self.models: dict[str, GpModel] = {}

    def fit(self, datasets: dict, seeds: dict) -> None:
        self.models = {}
        for disc in self.problem.disciplines:
            samples = datasets[disc.name]
            points = np.stack([s.point for s in samples])
            values = np.array([s.sq_distance for s in samples])
            grads = np.stack(
                [
                    2.0 * (s.point - s.projection)
                    if not s.feasible
                    else np.zeros(points.shape[1])
                    for s in samples
                ]
            )
            self.models[disc.name] = fit_gp(
                points, values, grads, self.problem.lower, self.problem.upper, self.config
            )

    def constraint(self, z: np.ndarray):
        values = np.empty(len(self.models))
        jac = np.empty((len(self.models), z.shape[0]))
        for i, disc in enumerate(self.problem.disciplines):
            mean, grad = posterior(self.models[disc.name], z)
            values[i] = mean - GP_FEASIBILITY_THRESHOLD
            jac[i] = grad
        return values, jac


def _propose_candidate(
    problem: CoProblem,
    surrogates,
    restarts: int,
    seed: int,
) -> tuple[np.ndarray, bool]:
    """Minimize f subject to the surrogate feasibility predicates.

    Falls back to minimizing the summed positive predicate values when the
    constrained search finds no feasible point.
    """
    options = SolveOptions(
        feasibility_tol=1e-6, optimality_tol=1e-4, max_outer=8, max_inner=60
    )
    nlp = NlpProblem(
        dim=problem.dim,
        objective=problem.objective,
        inequality=surrogates.constraint,
        lower=problem.lower,
        upper=problem.upper,
    )
    best = multistart_solve(nlp, restarts, seed=seed, options=options)
    if best.status == NUMERIC_ERROR:
        raise NumericError("candidate search failed numerically")
    if best.max_violation <= options.feasibility_tol:
        return best.x, True

    def violation_objective(z):
        values, jac = surrogates.constraint(z)
        active = values > 0.0
        return float(np.sum(values[active])), active.astype(float) @ jac

    fallback = NlpProblem(
        dim=problem.dim,
        objective=violation_objective,
        lower=problem.lower,
        upper=problem.upper,
    )
    best = multistart_solve(fallback, restarts, seed=seed + 1, options=options)
    if best.status == NUMERIC_ERROR:
        raise NumericError("violation minimization failed numerically")
    return best.x, False


def run_surrogate_co(
    problem: CoProblem,
    surrogate: str = "sdf",
    n_ini: int = 1,
    max_iter: int = 200,
    seed: int = 0,
    train_config: TrainConfig | None = None,
    gp_config: GpConfig | None = None,
    candidate_restarts: int = 15,
    relaxation: float = SYSTEM_RELAXATION,
    step_tol: float = 1e-3,
    subspace_restarts: int = 3,
) -> RunHistory:
    """Surrogate-assisted system loop.

    Per iteration: refit one feasibility surrogate per discipline on all data
    so far, search for the best surrogate-feasible candidate, evaluate the
    true projections there, and append them to the data.  Stops early when a
    candidate satisfies every true constraint within the relaxation and
    moved less than ``step_tol`` from the previous candidate.  Training or
    search failures are recorded and replaced by a fresh uniform sample so
    the loop keeps making progress.
    """
    problem.validate()
    if surrogate not in ("sdf", "gp"):
        raise InputError("surrogate must be 'sdf' or 'gp'")
    if max_iter < 1 or n_ini < 1:
        raise InputError("need at least one initial sample and one iteration")
    history = RunHistory(problem.name, surrogate, seed)
    rng = np.random.default_rng(seed)

    if surrogate == "sdf":
        surrogates = _SdfSurrogates(problem, train_config or TrainConfig())
    else:
        surrogates = _GpSurrogates(problem, gp_config or GpConfig())

    datasets: dict = {d.name: [] for d in problem.disciplines}

    def evaluate_candidate(z: np.ndarray) -> dict:
        results = {}
        for disc in problem.disciplines:
            res = evaluate_subspace(
                disc, z, problem.lower, problem.upper, restarts=subspace_restarts
            )
            results[disc.name] = res
            datasets[disc.name].append(_subspace_to_sample(z, res))
        return results

    try:
        for _ in range(n_ini):
            evaluate_candidate(rng.uniform(problem.lower, problem.upper))
    except NumericError:
        history.status = NUMERIC_ERROR
        return history

    previous = None
    for _ in range(max_iter):
        note = ""
        candidate = None
        surrogate_feasible = None
        seeds = {
            d.name: int(rng.integers(2**31)) for d in problem.disciplines
        }
        search_seed = int(rng.integers(2**31))
        try:
            surrogates.fit(datasets, seeds)
            candidate, surrogate_feasible = _propose_candidate(
                problem, surrogates, candidate_restarts, search_seed
            )
        except NumericError as exc:
            note = f"substituted uniform sample after failure: {exc}"
            candidate = rng.uniform(problem.lower, problem.upper)

        try:
            results = evaluate_candidate(candidate)
        except NumericError as exc:
            note = (note + "; " if note else "") + f"projection failed: {exc}"
            candidate = rng.uniform(problem.lower, problem.upper)
            surrogate_feasible = None
            try:
                results = evaluate_candidate(candidate)
            except NumericError:
                history.status = NUMERIC_ERROR
                return history

        _record(problem, history.records, candidate, results, surrogate_feasible, note)

        feasible_now = all(r.sq_distance <= relaxation for r in results.values())
        small_step = (
            previous is not None
            and float(np.linalg.norm(candidate - previous)) <= step_tol
        )
        if feasible_now and small_step:
            history.status = CONVERGED
            return history
        previous = candidate

    history.status = MAX_ITER
    return history
