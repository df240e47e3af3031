"""Augmented-Lagrangian solver for smooth nonlinear programs in a box.

The outer loop maintains explicit multipliers for equality and inequality
constraints and increases a quadratic penalty when feasibility stalls; each
subproblem is minimized with L-BFGS-B after an affine rescaling of the
finitely bounded variables to [0, 1], which keeps badly scaled problems
(e.g. motor speeds against voltages) tractable for the quasi-Newton inner
solver.  Mildly nonsmooth constraint models are accepted: the solver simply
consumes whichever subgradient the callbacks return.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import InputError

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
NUMERIC_ERROR = "numeric_error"


@dataclass
class NlpProblem:
    """min objective(x) s.t. equality(x) = 0, inequality(x) <= 0, lower <= x <= upper.

    Callbacks return a value vector together with its Jacobian (constraints)
    or the scalar objective with its gradient.
    """

    dim: int
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    equality: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    inequality: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    name: str = ""

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lower = (
            np.full(self.dim, -np.inf)
            if self.lower is None
            else np.asarray(self.lower, dtype=float)
        )
        upper = (
            np.full(self.dim, np.inf)
            if self.upper is None
            else np.asarray(self.upper, dtype=float)
        )
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise InputError("bounds must match the problem dimension")
        if np.any(lower > upper):
            raise InputError("lower bound exceeds upper bound")
        return lower, upper


@dataclass
class SolveOptions:
    feasibility_tol: float = 1e-6
    optimality_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 200
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_penalty: float = 1e12
    track_iterates: bool = False
    iterate_callback: Callable[[np.ndarray], None] | None = None
    trace_path: str | None = None


@dataclass
class NlpSolution:
    x: np.ndarray
    objective_value: float
    max_violation: float
    stationarity: float
    status: str
    outer_iterations: int = 0
    inner_iterations: int = 0
    restart_index: int = 0
    iterates: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= 1e-6 or self.max_violation == 0.0


class _CallbackFailure(Exception):
    """Raised internally when user callbacks fail or go non-finite."""


class _Scaler:
    """Affine map between raw variables and the [0, 1] solver space."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = lower
        self.upper = upper
        self.finite = np.isfinite(lower) & np.isfinite(upper)
        width = np.where(self.finite, upper - lower, 1.0)
        self.width = np.where(width > 0.0, width, 1.0)

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.finite, (x - np.where(self.finite, self.lower, 0.0)) / self.width, x)

    def to_external(self, t: np.ndarray) -> np.ndarray:
        x = np.where(self.finite, np.where(self.finite, self.lower, 0.0) + t * self.width, t)
        return np.clip(x, self.lower, self.upper)

    def grad_to_internal(self, grad_x: np.ndarray) -> np.ndarray:
        return np.where(self.finite, grad_x * self.width, grad_x)

    def internal_bounds(self):
        lo = np.where(self.finite, 0.0, self.lower)
        hi = np.where(self.finite, 1.0, self.upper)
        return list(zip(lo, hi))


def _call_objective(problem: NlpProblem, x: np.ndarray) -> tuple[float, np.ndarray]:
    try:
        value, grad = problem.objective(x)
    except Exception as exc:  # user callback failures become a solve status
        raise _CallbackFailure(str(exc)) from exc
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise _CallbackFailure("objective returned non-finite values")
    return float(value), grad


def _call_constraints(fn, x: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if fn is None:
        return np.zeros(0), np.zeros((0, dim))
    try:
        values, jac = fn(x)
    except Exception as exc:
        raise _CallbackFailure(str(exc)) from exc
    values = np.atleast_1d(np.asarray(values, dtype=float))
    jac = np.asarray(jac, dtype=float).reshape(values.shape[0], dim)
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(jac)):
        raise _CallbackFailure("constraint callback returned non-finite values")
    return values, jac


def solve(
    problem: NlpProblem,
    x0: np.ndarray,
    options: SolveOptions | None = None,
) -> NlpSolution:
    """Solve one NLP from a single start point."""
    options = options or SolveOptions()
    lower, upper = problem.bounds()
    scaler = _Scaler(lower, upper)
    x = np.asarray(x0, dtype=float)
    if x.shape != (problem.dim,):
        raise InputError("start point has the wrong dimension")
    x = np.clip(x, lower, upper)

    lam = None  # equality multipliers, sized on first evaluation
    mu = None
    penalty = options.initial_penalty
    iterates: list[np.ndarray] = []
    inner_total = 0
    best = None  # (key, x, f, viol, stat)
    prev_viol = np.inf
    stalls = 0
    best_stationarity = np.inf
    stationarity_stalls = 0

    def al_value_grad(t: np.ndarray):
        x_raw = scaler.to_external(t)
        f, gf = _call_objective(problem, x_raw)
        e, je = _call_constraints(problem.equality, x_raw, problem.dim)
        g, jg = _call_constraints(problem.inequality, x_raw, problem.dim)
        value = f
        grad = gf.copy()
        if e.size:
            value += lam @ e + 0.5 * penalty * (e @ e)
            grad += je.T @ (lam + penalty * e)
        if g.size:
            shifted = np.maximum(0.0, mu / penalty + g)
            value += 0.5 * penalty * (shifted @ shifted) - 0.5 * (mu @ mu) / penalty
            grad += jg.T @ (penalty * shifted)
        return value, scaler.grad_to_internal(grad)

    def snapshot(x_raw: np.ndarray):
        f, gf = _call_objective(problem, x_raw)
        e, je = _call_constraints(problem.equality, x_raw, problem.dim)
        g, jg = _call_constraints(problem.inequality, x_raw, problem.dim)
        return f, gf, e, je, g, jg

    def record_iterate(t: np.ndarray):
        x_raw = scaler.to_external(t)
        if options.track_iterates:
            iterates.append(x_raw)
        if options.iterate_callback is not None:
            options.iterate_callback(x_raw)

    status = MAX_ITER
    outer_done = 0
    try:
        f, gf, e, je, g, jg = snapshot(x)
        lam = np.zeros(e.shape[0])
        mu = np.zeros(g.shape[0])
        for outer in range(options.max_outer):
            outer_done = outer + 1
            t0 = scaler.to_internal(x)
            result = minimize(
                al_value_grad,
                t0,
                jac=True,
                method="L-BFGS-B",
                bounds=scaler.internal_bounds(),
                callback=record_iterate,
                options={
                    "maxiter": options.max_inner,
                    "ftol": 1e-14,
                    # inner accuracy only needs to undercut the outer target
                    "gtol": max(1e-10, 0.1 * options.optimality_tol),
                    "maxls": 60,
                },
            )
            inner_total += int(result.nit)
            x = scaler.to_external(result.x)
            f, gf, e, je, g, jg = snapshot(x)
            viol = 0.0
            if e.size:
                viol = max(viol, float(np.max(np.abs(e))))
            if g.size:
                viol = max(viol, float(np.max(np.maximum(g, 0.0))))

            # first-order multiplier estimates at the inner solution
            lam_new = lam + penalty * e if e.size else lam
            mu_new = np.maximum(0.0, mu + penalty * g) if g.size else mu
            grad_lagr = gf.copy()
            if e.size:
                grad_lagr += je.T @ lam_new
            if g.size:
                grad_lagr += jg.T @ mu_new
            t = scaler.to_internal(x)
            gt = scaler.grad_to_internal(grad_lagr)
            lo = np.where(scaler.finite, 0.0, lower)
            hi = np.where(scaler.finite, 1.0, upper)
            stationarity = float(np.max(np.abs(np.clip(t - gt, lo, hi) - t))) if problem.dim else 0.0

            key = (0, f) if viol <= options.feasibility_tol else (1, viol)
            if best is None or key < best[0]:
                best = (key, x.copy(), f, viol, stationarity)

            if viol <= options.feasibility_tol and stationarity <= options.optimality_tol:
                lam, mu = lam_new, mu_new
                status = CONVERGED
                break

            # feasible but stationarity no longer improving: typical for
            # piecewise-smooth constraint models, where the projected
            # gradient cannot reach a tight tolerance; keep the best point
            if viol <= options.feasibility_tol:
                if stationarity > 0.5 * best_stationarity:
                    stationarity_stalls += 1
                else:
                    stationarity_stalls = 0
                best_stationarity = min(best_stationarity, stationarity)
                if stationarity_stalls >= 2:
                    break

            if viol <= max(options.feasibility_tol, 0.25 * prev_viol):
                lam, mu = lam_new, mu_new
                prev_viol = min(prev_viol, viol)
                stalls = 0
            else:
                if penalty >= options.max_penalty:
                    stalls += 1
                    if stalls >= 3:
                        status = INFEASIBLE
                        break
                penalty = min(penalty * options.penalty_growth, options.max_penalty)
    except _CallbackFailure:
        status = NUMERIC_ERROR

    if status == CONVERGED:
        solution = NlpSolution(x, f, viol, stationarity, status)
    elif best is not None:
        _, bx, bf, bviol, bstat = best
        solution = NlpSolution(bx, bf, bviol, bstat, status)
    else:
        # failed before completing a single outer iteration
        solution = NlpSolution(x, np.nan, np.inf, np.inf, status)
    solution.outer_iterations = outer_done
    solution.inner_iterations = inner_total
    solution.iterates = iterates
    if options.trace_path:
        _write_trace(options.trace_path, iterates)
    return solution


def _write_trace(path, iterates: list[np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        dim = iterates[0].shape[0] if iterates else 0
        writer.writerow(["iteration"] + [f"x{i}" for i in range(dim)])
        for i, x in enumerate(iterates):
            writer.writerow([i] + [repr(float(v)) for v in x])


def multistart_solve(
    problem: NlpProblem,
    n_restarts: int,
    seed: int = 0,
    options: SolveOptions | None = None,
) -> NlpSolution:
    """Run :func:`solve` from uniform starts in the box; keep the best result.

    A feasible solution with the lowest objective wins; with no feasible
    solution the smallest maximum violation wins.  Ties keep the lowest
    restart index, so results are reproducible for a fixed seed.
    """
    if n_restarts < 1:
        raise InputError("need at least one restart")
    options = options or SolveOptions()
    lower, upper = problem.bounds()
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise InputError("multistart requires finite box bounds")
    rng = np.random.default_rng(seed)
    starts = rng.uniform(lower, upper, size=(n_restarts, problem.dim))
    best: NlpSolution | None = None
    for index, x0 in enumerate(starts):
        solution = solve(problem, x0, options)
        solution.restart_index = index
        if best is None or _better(solution, best, options.feasibility_tol):
            best = solution
    return best


def _better(a: NlpSolution, b: NlpSolution, feas_tol: float) -> bool:
    a_ok = a.max_violation <= feas_tol and a.status != NUMERIC_ERROR
    b_ok = b.max_violation <= feas_tol and b.status != NUMERIC_ERROR
    if a_ok != b_ok:
        return a_ok
    if a_ok:
        return a.objective_value < b.objective_value
    return a.max_violation < b.max_violation
