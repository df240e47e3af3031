"""Solver tests on problems with known closed-form solutions."""

import numpy as np
import pytest

from sdfco.errors import InputError
from sdfco.solver import (
    CONVERGED,
    INFEASIBLE,
    MAX_ITER,
    NUMERIC_ERROR,
    NlpProblem,
    SolveOptions,
    multistart_solve,
    solve,
)


def _quadratic_to(target):
    target = np.asarray(target, dtype=float)

    def objective(x):
        diff = x - target
        return float(diff @ diff), 2.0 * diff

    return objective


def _unit_ball_constraint(x):
    return np.array([x @ x - 1.0]), (2.0 * x)[None, :]


def test_projection_onto_unit_disk():
    # projecting (2, 0) onto the unit disk lands on (1, 0) with distance^2 = 1
    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([2.0, 0.0]),
        inequality=_unit_ball_constraint,
        lower=np.array([-3.0, -3.0]),
        upper=np.array([3.0, 3.0]),
    )
    solution = solve(problem, np.array([0.3, 0.4]))
    assert solution.status == CONVERGED
    assert np.allclose(solution.x, [1.0, 0.0], atol=1e-5)
    assert solution.objective_value == pytest.approx(1.0, abs=1e-5)
    assert solution.max_violation <= 1e-6


def test_linear_objective_active_inequality():
    def objective(x):
        return float(x[0]), np.array([1.0])

    def constraint(x):
        return np.array([0.5 - x[0]]), np.array([[-1.0]])

    problem = NlpProblem(
        dim=1,
        objective=objective,
        inequality=constraint,
        lower=np.array([0.0]),
        upper=np.array([1.0]),
    )
    solution = solve(problem, np.array([0.9]))
    assert solution.status == CONVERGED
    assert solution.x[0] == pytest.approx(0.5, abs=1e-6)


def test_rosenbrock_unconstrained():
    def objective(x):
        a, b = x
        value = (1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2
        grad = np.array(
            [-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]
        )
        return float(value), grad

    problem = NlpProblem(
        dim=2,
        objective=objective,
        lower=np.array([-5.0, -5.0]),
        upper=np.array([5.0, 5.0]),
    )
    solution = solve(problem, np.array([-1.2, 1.0]))
    assert solution.status == CONVERGED
    assert np.allclose(solution.x, [1.0, 1.0], atol=1e-4)


def test_equality_constrained_quadratic():
    # min x^2 + y^2 s.t. x + y = 1 has the unique solution (0.5, 0.5)
    def equality(x):
        return np.array([x[0] + x[1] - 1.0]), np.array([[1.0, 1.0]])

    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([0.0, 0.0]),
        equality=equality,
        lower=np.array([-2.0, -2.0]),
        upper=np.array([2.0, 2.0]),
    )
    solution = solve(problem, np.array([1.5, -0.7]))
    assert solution.status == CONVERGED
    assert np.allclose(solution.x, [0.5, 0.5], atol=1e-5)
    assert solution.objective_value == pytest.approx(0.5, abs=1e-5)


def test_multistart_finds_global_minimum():
    # cos(3 pi x) on [0, 2] has three global minima with value -1
    def objective(x):
        return float(np.cos(3.0 * np.pi * x[0])), np.array(
            [-3.0 * np.pi * np.sin(3.0 * np.pi * x[0])]
        )

    problem = NlpProblem(
        dim=1,
        objective=objective,
        lower=np.array([0.0]),
        upper=np.array([2.0]),
    )
    solution = multistart_solve(problem, n_restarts=8, seed=0)
    assert solution.status == CONVERGED
    assert solution.objective_value == pytest.approx(-1.0, abs=1e-8)
    minima = np.array([1.0 / 3.0, 1.0, 5.0 / 3.0])
    assert np.min(np.abs(solution.x[0] - minima)) < 1e-5


def test_solution_respects_box_exactly():
    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([10.0, -10.0]),
        lower=np.array([-1.0, -1.0]),
        upper=np.array([1.0, 1.0]),
    )
    solution = solve(problem, np.array([0.0, 0.0]))
    assert solution.status == CONVERGED
    assert np.all(solution.x >= problem.lower)
    assert np.all(solution.x <= problem.upper)
    assert np.allclose(solution.x, [1.0, -1.0])


def test_nan_objective_reports_numeric_error():
    def objective(x):
        return float("nan"), np.zeros(1)

    problem = NlpProblem(
        dim=1,
        objective=objective,
        lower=np.array([0.0]),
        upper=np.array([1.0]),
    )
    solution = solve(problem, np.array([0.5]))
    assert solution.status == NUMERIC_ERROR


def test_raising_constraint_reports_numeric_error():
    def constraint(x):
        raise ValueError("simulated model failure")

    problem = NlpProblem(
        dim=1,
        objective=_quadratic_to([0.0]),
        inequality=constraint,
        lower=np.array([-1.0]),
        upper=np.array([1.0]),
    )
    solution = solve(problem, np.array([0.5]))
    assert solution.status == NUMERIC_ERROR


def test_inconsistent_constraints_reported_infeasible():
    # x <= -1 and x >= 1 cannot both hold inside the box
    def inequality(x):
        return np.array([x[0] + 1.0, 1.0 - x[0]]), np.array([[1.0], [-1.0]])

    problem = NlpProblem(
        dim=1,
        objective=_quadratic_to([0.0]),
        inequality=inequality,
        lower=np.array([-2.0]),
        upper=np.array([2.0]),
    )
    solution = solve(problem, np.array([0.0]), SolveOptions(max_outer=40))
    assert solution.status in (INFEASIBLE, MAX_ITER)
    assert solution.max_violation > 0.5


def test_iterate_tracking_and_trace(tmp_path):
    seen = []
    trace = tmp_path / "trace.csv"
    options = SolveOptions(
        track_iterates=True,
        iterate_callback=seen.append,
        trace_path=str(trace),
    )
    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([2.0, 0.0]),
        inequality=_unit_ball_constraint,
        lower=np.array([-3.0, -3.0]),
        upper=np.array([3.0, 3.0]),
    )
    solution = solve(problem, np.array([-2.0, 2.0]), options)
    assert solution.status == CONVERGED
    assert len(solution.iterates) == len(seen) > 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,x0,x1"
    assert len(lines) == len(seen) + 1


def test_multistart_deterministic():
    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([2.0, 0.0]),
        inequality=_unit_ball_constraint,
        lower=np.array([-3.0, -3.0]),
        upper=np.array([3.0, 3.0]),
    )
    a = multistart_solve(problem, n_restarts=4, seed=7)
    b = multistart_solve(problem, n_restarts=4, seed=7)
    assert np.array_equal(a.x, b.x)
    assert a.objective_value == b.objective_value
    assert a.restart_index == b.restart_index


def test_multistart_requires_finite_box():
    problem = NlpProblem(dim=1, objective=_quadratic_to([0.0]))
    with pytest.raises(InputError):
        multistart_solve(problem, n_restarts=2)


def test_bad_start_dimension_rejected():
    problem = NlpProblem(
        dim=2,
        objective=_quadratic_to([0.0, 0.0]),
        lower=np.array([-1.0, -1.0]),
        upper=np.array([1.0, 1.0]),
    )
    with pytest.raises(InputError):
        solve(problem, np.zeros(3))
