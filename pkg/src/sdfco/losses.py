"""Training losses for feasibility surrogates.

All losses operate on labeled projection samples: a query point, whether it
was feasible, the squared distance to the feasible set, and (for infeasible
points) the closest feasible point plus the unit gradient of the distance.
Parameter gradients are assembled from network vector-Jacobian products, so
losses may freely involve the input gradient of the network.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .nn import Network

BASELINE_KINDS = ("jfit", "hinge", "hybrid")

# Networks fitted to the squared distance directly have no natural zero level
# set; points are declared feasible below this small positive threshold.
JFIT_THRESHOLD = 1e-4


@dataclass
class LabeledSample:
    """One evaluated query point with its projection onto the feasible set."""

    point: np.ndarray
    feasible: bool
    sq_distance: float
    projection: np.ndarray | None = None
    distance_grad: np.ndarray | None = None

    def validate(self) -> None:
        point = np.asarray(self.point, dtype=float)
        if point.ndim != 1:
            raise InputError("sample point must be a 1-d array")
        if self.sq_distance < 0.0:
            raise InputError("squared distance cannot be negative")
        if not self.feasible and self.sq_distance == 0.0:
            raise InputError("infeasible sample needs a positive squared distance")
        for arr in (self.projection, self.distance_grad):
            if arr is not None and np.asarray(arr).shape != point.shape:
                raise InputError("sample arrays must share the point dimension")


def _stack(dataset: list[LabeledSample]):
    if not dataset:
        raise InputError("empty dataset")
    dim = np.asarray(dataset[0].point).shape[0]
    for sample in dataset:
        sample.validate()
        if np.asarray(sample.point).shape[0] != dim:
            raise InputError("dataset mixes point dimensions")
    points = np.array([s.point for s in dataset], dtype=float)
    feasible = np.array([s.feasible for s in dataset], dtype=bool)
    sq_dist = np.array([s.sq_distance for s in dataset], dtype=float)
    return points, feasible, sq_dist


def hybrid_loss(h_value: float, sample: LabeledSample) -> float:
    """Distance fit outside the feasible set, hinge at zero inside."""
    if sample.feasible:
        return max(h_value, 0.0)
    return abs(h_value - math.sqrt(sample.sq_distance))


def gradient_augmented_loss(net: Network, sample: LabeledSample) -> float:
    """Hybrid loss extended with first-order distance information.

    Infeasible samples contribute the value mismatch at the query point, the
    L1 mismatch of the network gradient against the unit distance gradient,
    and both terms again at the projected boundary point (where the distance
    is zero).  Feasible samples keep the plain hinge.
    """
    h, grad = net.value_and_grad(np.asarray(sample.point, dtype=float))
    if sample.feasible:
        return max(h, 0.0)
    if sample.projection is None or sample.distance_grad is None:
        raise InputError("infeasible sample lacks projection data")
    target = np.asarray(sample.distance_grad, dtype=float)
    root = math.sqrt(sample.sq_distance)
    h_proj, grad_proj = net.value_and_grad(np.asarray(sample.projection, dtype=float))
    return (
        abs(h - root)
        + float(np.sum(np.abs(grad - target)))
        + abs(h_proj)
        + float(np.sum(np.abs(grad_proj - target)))
    )


class HybridLoss:
    """Batched hybrid loss over a dataset; mean over samples."""

    def __init__(self, dataset: list[LabeledSample]):
        self.points, self.feasible, sq = _stack(dataset)
        self.root_dist = np.sqrt(sq)

    def value(self, net: Network) -> float:
        h = np.atleast_1d(net.forward(self.points))
        return float(np.mean(self._per_sample(h)))

    def _per_sample(self, h: np.ndarray) -> np.ndarray:
        return np.where(
            self.feasible, np.maximum(h, 0.0), np.abs(h - self.root_dist)
        )

    def value_and_grad(self, net: Network):
        h = np.atleast_1d(net.forward(self.points))
        n = h.shape[0]
        value = float(np.mean(self._per_sample(h)))
        h_bar = np.where(
            self.feasible,
            (h > 0.0).astype(float),
            np.sign(h - self.root_dist),
        ) / n
        grads, _ = net.vjp(self.points, h_bar)
        return value, grads


class GradientAugmentedLoss:
    """Batched gradient-augmented loss; mean over samples."""

    def __init__(self, dataset: list[LabeledSample]):
        self.points, self.feasible, sq = _stack(dataset)
        self.root_dist = np.sqrt(sq)
        idx = np.flatnonzero(~self.feasible)
        self.infeasible_idx = idx
        if idx.size:
            for i in idx:
                if dataset[i].projection is None or dataset[i].distance_grad is None:
                    raise InputError("infeasible sample lacks projection data")
            self.projections = np.array(
                [dataset[i].projection for i in idx], dtype=float
            )
            self.grad_targets = np.array(
                [dataset[i].distance_grad for i in idx], dtype=float
            )
        else:
            dim = self.points.shape[1]
            self.projections = np.zeros((0, dim))
            self.grad_targets = np.zeros((0, dim))

    def value(self, net: Network) -> float:
        return self._evaluate(net, with_grad=False)[0]

    def value_and_grad(self, net: Network):
        return self._evaluate(net, with_grad=True)

    def _evaluate(self, net: Network, with_grad: bool):
        n = self.points.shape[0]
        idx = self.infeasible_idx
        h, grad = net.value_and_grad(self.points)
        h = np.atleast_1d(h)
        grad = np.atleast_2d(grad)
        terms = np.where(self.feasible, np.maximum(h, 0.0), 0.0)
        if idx.size:
            h_in = h[idx]
            grad_in = grad[idx]
            h_proj, grad_proj = net.value_and_grad(self.projections)
            h_proj = np.atleast_1d(h_proj)
            grad_proj = np.atleast_2d(grad_proj)
            value_terms = (
                np.abs(h_in - self.root_dist[idx])
                + np.sum(np.abs(grad_in - self.grad_targets), axis=1)
                + np.abs(h_proj)
                + np.sum(np.abs(grad_proj - self.grad_targets), axis=1)
            )
            terms = terms.copy()
            terms[idx] = value_terms
        value = float(np.mean(terms))
        if not with_grad:
            return value, None

        h_bar = np.where(self.feasible, (h > 0.0).astype(float), 0.0) / n
        g_bar = np.zeros_like(grad)
        if idx.size:
            h_bar[idx] = np.sign(h_in - self.root_dist[idx]) / n
            g_bar[idx] = np.sign(grad_in - self.grad_targets) / n
        grads, _ = net.vjp(self.points, h_bar, g_bar)
        if idx.size:
            hp_bar = np.sign(h_proj) / n
            gp_bar = np.sign(grad_proj - self.grad_targets) / n
            grads_proj, _ = net.vjp(self.projections, hp_bar, gp_bar)
            grads = add_grads(grads, grads_proj)
        return value, grads


class JFitLoss:
    """Mean squared error against the squared distance itself."""

    def __init__(self, dataset: list[LabeledSample]):
        self.points, _, self.sq_dist = _stack(dataset)

    def value(self, net: Network) -> float:
        h = np.atleast_1d(net.forward(self.points))
        return float(np.mean((h - self.sq_dist) ** 2))

    def value_and_grad(self, net: Network):
        h = np.atleast_1d(net.forward(self.points))
        n = h.shape[0]
        residual = h - self.sq_dist
        value = float(np.mean(residual**2))
        grads, _ = net.vjp(self.points, 2.0 * residual / n)
        return value, grads


class HingeLoss:
    """Margin classifier loss; infeasible points are the positive class."""

    def __init__(self, dataset: list[LabeledSample]):
        self.points, feasible, _ = _stack(dataset)
        self.labels = np.where(feasible, -1.0, 1.0)

    def value(self, net: Network) -> float:
        h = np.atleast_1d(net.forward(self.points))
        return float(np.mean(np.maximum(0.0, 1.0 - self.labels * h)))

    def value_and_grad(self, net: Network):
        h = np.atleast_1d(net.forward(self.points))
        n = h.shape[0]
        margins = 1.0 - self.labels * h
        value = float(np.mean(np.maximum(0.0, margins)))
        h_bar = np.where(margins > 0.0, -self.labels, 0.0) / n
        grads, _ = net.vjp(self.points, h_bar)
        return value, grads


def sdf_regularizer(net: Network, points: np.ndarray) -> float:
    """Mean signed-distance defect over sampled points.

    Per point: (|grad h| - 1)^2 penalizes non-unit gradients, h(y)^2 requires
    the induced boundary guess y = z - h(z) grad h(z) to sit on the zero
    level set, and |grad h(y) - grad h(z)|^2 asks the gradient to be constant
    along that ray.  Empty point sets contribute zero.
    """
    return _regularizer(net, points, with_grad=False)[0]


def sdf_regularizer_grad(net: Network, points: np.ndarray):
    """Value and parameter gradients of :func:`sdf_regularizer`."""
    return _regularizer(net, points, with_grad=True)


def _regularizer(net: Network, points: np.ndarray, with_grad: bool):
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return 0.0, (net.zero_grads() if with_grad else None)
    if points.ndim == 1:
        points = points[None, :]
    n = points.shape[0]
    h, grad = net.value_and_grad(points)
    h = np.atleast_1d(h)
    grad = np.atleast_2d(grad)
    norms = np.linalg.norm(grad, axis=1)
    boundary = points - h[:, None] * grad
    h_b, grad_b = net.value_and_grad(boundary)
    h_b = np.atleast_1d(h_b)
    grad_b = np.atleast_2d(grad_b)
    diff = grad_b - grad
    value = float(
        np.mean((norms - 1.0) ** 2 + h_b**2 + np.sum(diff**2, axis=1))
    )
    if not with_grad:
        return value, None

    hb_bar = 2.0 * h_b / n
    gb_bar = 2.0 * diff / n
    grads_b, boundary_bar = net.vjp(boundary, hb_bar, gb_bar)

    # through y = z - h(z) grad(z)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = np.where(norms[:, None] > 0.0, grad / safe[:, None], 0.0)
    g_bar = (
        -2.0 * diff / n
        + 2.0 * (norms - 1.0)[:, None] * unit / n
        - h[:, None] * boundary_bar
    )
    h_bar = -np.sum(boundary_bar * grad, axis=1)
    grads_z, _ = net.vjp(points, h_bar, g_bar)
    return value, add_grads(grads_b, grads_z)


def add_grads(a, b):
    """Elementwise sum of two per-layer gradient lists."""
    return [(ga_w + gb_w, ga_b + gb_b) for (ga_w, ga_b), (gb_w, gb_b) in zip(a, b)]


def scale_grads(grads, factor: float):
    return [(w * factor, b * factor) for w, b in grads]


def classify(net: Network, z, threshold: float = 0.0):
    """Feasibility prediction: network value at or below the threshold.

    Signed-distance style surrogates use the default zero threshold; nets
    fitted to the squared distance itself should pass ``JFIT_THRESHOLD``.
    """
    h = net.forward(np.asarray(z, dtype=float))
    if np.ndim(h) == 0:
        return bool(h <= threshold)
    return np.asarray(h) <= threshold


# -- dataset serialization ----------------------------------------------


def save_dataset(dataset: list[LabeledSample], path) -> None:
    """Write samples as CSV; projection and gradient cells empty when absent."""
    if not dataset:
        raise InputError("refusing to write an empty dataset")
    dim = np.asarray(dataset[0].point).shape[0]
    header = (
        [f"z{i}" for i in range(dim)]
        + ["feasible", "sq_distance"]
        + [f"proj{i}" for i in range(dim)]
        + [f"dgrad{i}" for i in range(dim)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sample in dataset:
            sample.validate()
            row = [repr(float(v)) for v in np.asarray(sample.point, dtype=float)]
            row.append("1" if sample.feasible else "0")
            row.append(repr(float(sample.sq_distance)))
            for arr in (sample.projection, sample.distance_grad):
                if arr is None:
                    row.extend([""] * dim)
                else:
                    row.extend(repr(float(v)) for v in np.asarray(arr, dtype=float))
            writer.writerow(row)


def load_dataset(path) -> list[LabeledSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "z0":
            raise InputError(f"{path} is not a labeled-sample CSV")
        dim = sum(1 for name in header if name.startswith("z"))
        expected = 2 + 3 * dim
        if len(header) != expected:
            raise InputError("dataset header has unexpected shape")
        dataset = []
        for row in reader:
            if len(row) != expected:
                raise InputError("dataset row has unexpected shape")
            point = np.array([float(v) for v in row[:dim]])
            feasible = row[dim] == "1"
            sq_distance = float(row[dim + 1])
            proj_cells = row[dim + 2 : 2 * dim + 2]
            grad_cells = row[2 * dim + 2 :]
            projection = (
                np.array([float(v) for v in proj_cells])
                if all(cell != "" for cell in proj_cells)
                else None
            )
            distance_grad = (
                np.array([float(v) for v in grad_cells])
                if all(cell != "" for cell in grad_cells)
                else None
            )
            sample = LabeledSample(point, feasible, sq_distance, projection, distance_grad)
            sample.validate()
            dataset.append(sample)
    return dataset
