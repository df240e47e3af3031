"""Gaussian-process regression tests with finite-difference oracles."""

import numpy as np
import pytest

from sdfco.errors import NumericError
from sdfco.gp import (
    GpConfig,
    build_gp,
    fit_gp,
    joint_covariance,
    nlml_and_grad,
    posterior,
)


def _test_function(x):
    # smooth target with known gradient
    value = np.sin(x[0]) + 0.5 * x[1] ** 2 + 0.3 * x[0] * x[1]
    grad = np.array([np.cos(x[0]) + 0.3 * x[1], x[1] + 0.3 * x[0]])
    return value, grad


def _dataset(n=6, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-2.0, 2.0, size=(n, 2))
    values = np.empty(n)
    gradients = np.empty((n, 2))
    for i, x in enumerate(points):
        values[i], gradients[i] = _test_function(x)
    return points, values, gradients


def test_joint_covariance_symmetric():
    points, _, _ = _dataset()
    k = joint_covariance(points, points, 0.3, np.array([0.1, -0.2]))
    assert np.max(np.abs(k - k.T)) < 1e-12
    # positive definite once a small diagonal is added
    eigs = np.linalg.eigvalsh(k + 1e-10 * np.eye(k.shape[0]))
    assert np.min(eigs) > 0.0


def test_joint_covariance_matches_finite_differences():
    # gradient blocks must be consistent with differentiating the value block
    rng = np.random.default_rng(1)
    x1 = rng.uniform(-1.0, 1.0, size=(3, 2))
    x2 = rng.uniform(-1.0, 1.0, size=(4, 2))
    log_ls = np.array([0.2, -0.1])
    k = joint_covariance(x1, x2, 0.1, log_ls)
    n1, n2, dim = 3, 4, 2
    step = 1e-6
    for j in range(n2):
        for e in range(dim):
            for i in range(n1):
                plus = x2.copy()
                plus[j, e] += step
                minus = x2.copy()
                minus[j, e] -= step
                kp = joint_covariance(x1[i : i + 1], plus[j : j + 1], 0.1, log_ls)
                km = joint_covariance(x1[i : i + 1], minus[j : j + 1], 0.1, log_ls)
                fd = (kp[0, 0] - km[0, 0]) / (2.0 * step)
                assert k[i, n2 + j * dim + e] == pytest.approx(fd, abs=1e-6)


def test_covariance_log_gradients_match_finite_differences():
    points, _, _ = _dataset(n=4, seed=2)
    log_signal = 0.3
    log_ls = np.array([0.1, -0.3])
    _, grads = joint_covariance(points, points, log_signal, log_ls, with_grads=True)
    step = 1e-6

    kp = joint_covariance(points, points, log_signal + step, log_ls)
    km = joint_covariance(points, points, log_signal - step, log_ls)
    fd = (kp - km) / (2.0 * step)
    assert np.max(np.abs(grads[0] - fd)) < 1e-5

    for c in range(2):
        shift = np.zeros(2)
        shift[c] = step
        kp = joint_covariance(points, points, log_signal, log_ls + shift)
        km = joint_covariance(points, points, log_signal, log_ls - shift)
        fd = (kp - km) / (2.0 * step)
        assert np.max(np.abs(grads[1 + c] - fd)) < 1e-5


def test_posterior_interpolates_with_small_noise():
    points, values, gradients = _dataset()
    model = build_gp(points, values, gradients, 0.5, np.array([0.0, 0.0]), np.log(1e-12))
    for x, value, grad in zip(points, values, gradients):
        mean, mean_grad = posterior(model, x)
        assert mean == pytest.approx(value, abs=1e-6)
        assert np.allclose(mean_grad, grad, atol=1e-5)


def test_posterior_permutation_invariant():
    points, values, gradients = _dataset()
    model = build_gp(points, values, gradients, 0.0, np.zeros(2), np.log(1e-8))
    perm = np.array([3, 0, 5, 1, 4, 2])
    shuffled = build_gp(
        points[perm], values[perm], gradients[perm], 0.0, np.zeros(2), np.log(1e-8)
    )
    query = np.array([0.4, -0.9])
    mean_a, grad_a = posterior(model, query)
    mean_b, grad_b = posterior(shuffled, query)
    assert mean_a == pytest.approx(mean_b, abs=1e-10)
    assert np.allclose(grad_a, grad_b, atol=1e-10)


def test_posterior_gradient_matches_finite_differences():
    points, values, gradients = _dataset()
    model = build_gp(points, values, gradients, 0.2, np.array([0.1, 0.2]), np.log(1e-6))
    query = np.array([0.25, -0.5])
    _, grad = posterior(model, query)
    step = 1e-6
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = step
        plus, _ = posterior(model, query + shift)
        minus, _ = posterior(model, query - shift)
        fd = (plus - minus) / (2.0 * step)
        assert grad[d] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_nlml_gradient_matches_finite_differences():
    points, values, gradients = _dataset(n=5, seed=3)
    observations = np.concatenate([values, gradients.reshape(-1)])
    config = GpConfig()
    params = np.array([0.2, 0.1, -0.2, np.log(1e-3)])
    _, grad = nlml_and_grad(points, observations, params, config)
    step = 1e-6
    for i in range(params.shape[0]):
        shift = np.zeros_like(params)
        shift[i] = step
        vp, _ = nlml_and_grad(points, observations, params + shift, config)
        vm, _ = nlml_and_grad(points, observations, params - shift, config)
        fd = (vp - vm) / (2.0 * step)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_fit_keeps_best_hyperparameters():
    points, values, gradients = _dataset(n=8, seed=4)
    config = GpConfig(epochs=100)
    lower = np.array([-2.0, -2.0])
    upper = np.array([2.0, 2.0])
    observations = np.concatenate([values, gradients.reshape(-1)])
    initial = np.concatenate(
        [[0.0], np.log((upper - lower) / 2.0), [np.log(config.initial_noise)]]
    )
    initial_nlml, _ = nlml_and_grad(points, observations, initial, config)
    model = fit_gp(points, values, gradients, lower, upper, config)
    fitted = np.concatenate(
        [[model.log_signal], model.log_lengthscales, [model.log_noise]]
    )
    fitted_nlml, _ = nlml_and_grad(points, observations, fitted, config)
    assert fitted_nlml <= initial_nlml + 1e-10


def test_fitted_model_predicts_held_out_points():
    points, values, gradients = _dataset(n=12, seed=5)
    model = fit_gp(
        points,
        values,
        gradients,
        np.array([-2.0, -2.0]),
        np.array([2.0, 2.0]),
        GpConfig(epochs=150),
    )
    rng = np.random.default_rng(6)
    queries = rng.uniform(-1.5, 1.5, size=(5, 2))
    for x in queries:
        truth, _ = _test_function(x)
        mean, _ = posterior(model, x)
        assert mean == pytest.approx(truth, abs=0.05)


def test_duplicate_points_survive_via_jitter():
    points, values, gradients = _dataset(n=4, seed=7)
    points = np.vstack([points, points[:1]])
    values = np.concatenate([values, values[:1]])
    gradients = np.vstack([gradients, gradients[:1]])
    model = build_gp(points, values, gradients, 0.0, np.zeros(2), np.log(1e-14))
    mean, _ = posterior(model, points[0])
    assert np.isfinite(mean)


def test_singular_covariance_raises_numeric_error():
    points = np.zeros((3, 2))
    values = np.zeros(3)
    gradients = np.zeros((3, 2))
    config = GpConfig(jitter=1e-18, max_jitter=1e-17)
    with pytest.raises(NumericError):
        build_gp(points, values, gradients, 0.0, np.zeros(2), np.log(1e-18), config)
