"""Unit-ball benchmark problems with analytic projection oracles.

The feasible set is the closed unit ball in d dimensions, so the projection
of any outside point and its squared distance are known in closed form.
That makes these problems the reference fixtures for the projection solver
and the surrogate training benchmarks.  Sampling domains are the box
[-2, 2]^d.
"""

from __future__ import annotations

import numpy as np

from ..co import CoProblem, Discipline, DisciplineEvaluation
from ..errors import InputError
from ..losses import LabeledSample
from ..nn import DenseLayer, Network, NetworkConfig

BOX_HALF_WIDTH = 2.0


class BallDiscipline(Discipline):
    """Discipline whose feasible set is the closed unit ball, no local variables."""

    def __init__(self, dim: int, name: str = "ball"):
        if dim < 1:
            raise InputError("dimension must be at least 1")
        super().__init__(
            name,
            local_lower=np.zeros(0),
            local_upper=np.zeros(0),
            shared_lower=np.full(dim, -BOX_HALF_WIDTH),
            shared_upper=np.full(dim, BOX_HALF_WIDTH),
        )
        self.dim = dim

    def _constraints(self, shared, local):
        return DisciplineEvaluation(
            eq=np.zeros(0),
            eq_jac_shared=np.zeros((0, self.dim)),
            eq_jac_local=np.zeros((0, 0)),
            ineq=np.array([shared @ shared - 1.0]),
            ineq_jac_shared=(2.0 * shared)[None, :],
            ineq_jac_local=np.zeros((1, 0)),
        )


def ball_projection_oracle(z: np.ndarray):
    """Closed-form projection onto the unit ball.

    Returns (squared distance, projection, unit gradient or None).
    """
    z = np.asarray(z, dtype=float)
    norm = float(np.linalg.norm(z))
    if norm <= 1.0:
        return 0.0, z.copy(), None
    projection = z / norm
    distance = norm - 1.0
    return distance * distance, projection, (z - projection) / distance


def build_hypersphere_problem(dim: int):
    """Unit-ball discipline together with its analytic projection oracle."""
    return BallDiscipline(dim), ball_projection_oracle


def build_first_coordinate_problem(dim: int = 2) -> CoProblem:
    """Minimize the first coordinate over the unit ball; optimum (-1, 0, ...)."""

    def objective(z):
        grad = np.zeros(dim)
        grad[0] = 1.0
        return float(z[0]), grad

    return CoProblem(
        shared_names=tuple(f"z{i}" for i in range(dim)),
        shared_units=tuple("" for _ in range(dim)),
        lower=np.full(dim, -BOX_HALF_WIDTH),
        upper=np.full(dim, BOX_HALF_WIDTH),
        objective=objective,
        disciplines=[BallDiscipline(dim)],
        name=f"ball-{dim}d",
    )


def _label(z: np.ndarray) -> LabeledSample:
    sq_distance, projection, grad = ball_projection_oracle(z)
    if grad is None:
        return LabeledSample(point=z.copy(), feasible=True, sq_distance=0.0)
    return LabeledSample(
        point=z.copy(),
        feasible=False,
        sq_distance=sq_distance,
        projection=projection,
        distance_grad=grad,
    )


def make_disk_dataset(dim: int, n_train: int = 50, n_test: int = 500, seed: int = 0):
    """Uniform samples in [-2, 2]^dim labeled by the analytic oracle."""
    if dim < 1:
        raise InputError("dimension must be at least 1")
    rng = np.random.default_rng(seed)
    points = rng.uniform(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, size=(n_train + n_test, dim))
    samples = [_label(z) for z in points]
    return samples[:n_train], samples[n_train:]


def exact_halfline_network() -> Network:
    """Exact signed distance to the set {z >= 0} on the line: h(z) = -z."""
    config = NetworkConfig(
        layer_widths=(1, 1), activation="groupsort", groups=1, lipschitz=True
    )
    layer = DenseLayer(
        weights=np.array([[-1.0]]), biases=np.zeros(1), orthonormal=True
    )
    return Network(config=config, layers=[layer])


def make_halfline_dataset(n: int = 40, seed: int = 0):
    """Points on [-2, 2] labeled against the set {z >= 0}."""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, size=n)
    samples = []
    for z in points:
        point = np.array([z])
        if z >= 0.0:
            samples.append(LabeledSample(point=point, feasible=True, sq_distance=0.0))
        else:
            samples.append(
                LabeledSample(
                    point=point,
                    feasible=False,
                    sq_distance=z * z,
                    projection=np.zeros(1),
                    distance_grad=np.array([-1.0]),
                )
            )
    return samples
