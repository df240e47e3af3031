"""Gaussian-process regression on joint value and gradient observations.

A squared-exponential kernel with per-dimension lengthscales is conditioned
on function values together with full gradients, so every sample contributes
1 + dim observations.  Hyperparameters (signal variance, lengthscales, noise
variance) are optimized in log space by Adam on the negative log marginal
likelihood with analytic derivatives of the covariance blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import InputError, NumericError


@dataclass
class GpConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    initial_noise: float = 1e-6
    jitter: float = 1e-8
    max_jitter: float = 1e-3


def joint_covariance(
    x1: np.ndarray,
    x2: np.ndarray,
    log_signal: float,
    log_lengthscales: np.ndarray,
    with_grads: bool = False,
):
    """Covariance of [values(x1); gradients(x1)] against the same for x2.

    Rows and columns are ordered values first, then gradients flattened
    point-major.  With ``with_grads`` the derivatives of the matrix with
    respect to log signal variance and each log lengthscale are returned
    as well.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n1, dim = x1.shape
    n2 = x2.shape[0]
    signal = np.exp(log_signal)
    ls2 = np.exp(2.0 * np.asarray(log_lengthscales, dtype=float))

    r = x1[:, None, :] - x2[None, :, :]
    scaled = r / ls2
    k = signal * np.exp(-0.5 * np.sum(r * scaled, axis=2))

    eye = np.eye(dim)
    # cov(f(x1_i), d f(x2_j) / dx_e) differentiates the second argument
    kvg = k[:, :, None] * scaled
    kgv = -kvg
    kgg = k[:, :, None, None] * (
        eye[None, None, :, :] / ls2[None, None, None, :]
        - scaled[:, :, :, None] * scaled[:, :, None, :]
    )
    full = np.empty((n1 * (1 + dim), n2 * (1 + dim)))
    full[:n1, :n2] = k
    full[:n1, n2:] = kvg.reshape(n1, n2 * dim)
    full[n1:, :n2] = kgv.transpose(0, 2, 1).reshape(n1 * dim, n2)
    full[n1:, n2:] = kgg.transpose(0, 2, 1, 3).reshape(n1 * dim, n2 * dim)
    if not with_grads:
        return full

    grads = [full.copy()]  # d/dlog signal scales every block by 1
    for c in range(dim):
        factor = r[:, :, c] ** 2 / ls2[c]
        dk = k * factor
        dvg = kvg * factor[:, :, None]
        dvg[:, :, c] -= 2.0 * kvg[:, :, c]
        dgv = -dvg
        dgg = kgg * factor[:, :, None, None]
        dgg[:, :, c, :] -= 2.0 * kgg[:, :, c, :]
        dgg[:, :, :, c] -= 2.0 * kgg[:, :, :, c]
        # the diagonal delta term only carries a single lengthscale factor
        dgg[:, :, c, c] += 2.0 * k / ls2[c]
        dfull = np.empty_like(full)
        dfull[:n1, :n2] = dk
        dfull[:n1, n2:] = dvg.reshape(n1, n2 * dim)
        dfull[n1:, :n2] = dgv.transpose(0, 2, 1).reshape(n1 * dim, n2)
        dfull[n1:, n2:] = dgg.transpose(0, 2, 1, 3).reshape(n1 * dim, n2 * dim)
        grads.append(dfull)
    return full, grads


@dataclass
class GpModel:
    points: np.ndarray
    observations: np.ndarray
    log_signal: float
    log_lengthscales: np.ndarray
    log_noise: float
    alpha: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _stack_observations(values: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    return np.concatenate([values, gradients.reshape(-1)])


def _factorize(k_signal: np.ndarray, noise: float, signal: float, config: GpConfig):
    """Cholesky with escalating diagonal jitter, scaled by the signal level."""
    n = k_signal.shape[0]
    matrix = k_signal + noise * np.eye(n)
    jitter = config.jitter
    while True:
        try:
            return cho_factor(matrix + jitter * signal * np.eye(n), lower=True)
        except LinAlgError:
            jitter *= 10.0
            if jitter > config.max_jitter:
                raise NumericError("covariance matrix is not positive definite")


def nlml_and_grad(
    points: np.ndarray,
    observations: np.ndarray,
    log_params: np.ndarray,
    config: GpConfig,
) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log space.

    ``log_params`` is [log signal variance, log lengthscales..., log noise
    variance].
    """
    dim = points.shape[1]
    log_signal = log_params[0]
    log_ls = log_params[1 : 1 + dim]
    noise = np.exp(log_params[-1])
    k_signal, k_grads = joint_covariance(points, points, log_signal, log_ls, with_grads=True)
    factor = _factorize(k_signal, noise, np.exp(log_signal), config)
    alpha = cho_solve(factor, observations)
    n = observations.shape[0]
    value = (
        0.5 * float(observations @ alpha)
        + float(np.sum(np.log(np.diag(factor[0]))))
        + 0.5 * n * np.log(2.0 * np.pi)
    )
    k_inv = cho_solve(factor, np.eye(n))
    inner = k_inv - np.outer(alpha, alpha)
    grad = np.empty(log_params.shape[0])
    for i, dk in enumerate(k_grads):
        grad[i] = 0.5 * float(np.sum(inner * dk))
    grad[-1] = 0.5 * noise * float(np.trace(inner))
    return value, grad


def fit_gp(
    points: np.ndarray,
    values: np.ndarray,
    gradients: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    config: GpConfig | None = None,
) -> GpModel:
    """Fit hyperparameters by Adam in log space; keep the best iterate seen."""
    config = config or GpConfig()
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    gradients = np.asarray(gradients, dtype=float)
    if points.ndim != 2 or values.shape != (points.shape[0],):
        raise InputError("points must be (n, dim) with one value per point")
    if gradients.shape != points.shape:
        raise InputError("gradients must match the shape of points")
    dim = points.shape[1]
    observations = _stack_observations(values, gradients)

    widths = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    params = np.concatenate(
        [
            [0.0],
            np.log(np.maximum(widths / 2.0, 1e-8)),
            [np.log(config.initial_noise)],
        ]
    )

    best_value = np.inf
    best_params = params.copy()
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for step in range(1, config.epochs + 1):
        try:
            value, grad = nlml_and_grad(points, observations, params, config)
        except NumericError:
            break
        if value < best_value:
            best_value = value
            best_params = params.copy()
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    model = GpModel(
        points=points,
        observations=observations,
        log_signal=float(best_params[0]),
        log_lengthscales=best_params[1 : 1 + dim].copy(),
        log_noise=float(best_params[-1]),
    )
    _finalize(model, config)
    return model


def build_gp(
    points: np.ndarray,
    values: np.ndarray,
    gradients: np.ndarray,
    log_signal: float,
    log_lengthscales: np.ndarray,
    log_noise: float,
    config: GpConfig | None = None,
) -> GpModel:
    """Condition on data with fixed hyperparameters (no fitting)."""
    config = config or GpConfig()
    points = np.asarray(points, dtype=float)
    model = GpModel(
        points=points,
        observations=_stack_observations(
            np.asarray(values, dtype=float), np.asarray(gradients, dtype=float)
        ),
        log_signal=float(log_signal),
        log_lengthscales=np.asarray(log_lengthscales, dtype=float),
        log_noise=float(log_noise),
    )
    _finalize(model, config)
    return model


def _finalize(model: GpModel, config: GpConfig) -> None:
    k_signal = joint_covariance(
        model.points, model.points, model.log_signal, model.log_lengthscales
    )
    factor = _factorize(
        k_signal, np.exp(model.log_noise), np.exp(model.log_signal), config
    )
    model.alpha = cho_solve(factor, model.observations)


def posterior(model: GpModel, z: np.ndarray) -> tuple[float, np.ndarray]:
    """Posterior mean and its gradient with respect to the query point."""
    z = np.asarray(z, dtype=float)
    if z.shape != (model.dim,):
        raise InputError("query point has the wrong dimension")
    n, dim = model.points.shape
    signal = np.exp(model.log_signal)
    ls2 = np.exp(2.0 * model.log_lengthscales)
    r = z[None, :] - model.points
    scaled = r / ls2
    k = signal * np.exp(-0.5 * np.sum(r * scaled, axis=1))

    cross = np.empty(n * (1 + dim))
    cross[:n] = k
    cross[n:] = (k[:, None] * scaled).reshape(-1)
    mean = float(cross @ model.alpha)

    # derivative of each cross-covariance entry with respect to z
    d_values = -k[:, None] * scaled
    d_grads = k[:, None, None] * (
        np.eye(dim)[None, :, :] / ls2[None, None, :]
        - scaled[:, :, None] * scaled[:, None, :]
    )
    jac = np.empty((n * (1 + dim), dim))
    jac[:n] = d_values
    jac[n:] = d_grads.transpose(0, 2, 1).reshape(n * dim, dim)
    grad = jac.T @ model.alpha
    return mean, grad
