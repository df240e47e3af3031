"""Small dense networks with norm-preserving layers and closed-form differentiation.

The networks here are scalar-valued feedforward nets used as feasibility
surrogates.  Two things set them apart from a generic MLP implementation:

* Layers can be kept orthonormal (Bjorck iteration) and combined with the
  GroupSort activation, which makes the whole map 1-Lipschitz.
* Training losses depend not only on the network value h(z) but also on its
  input gradient grad_z h(z).  Parameter gradients of such losses need one
  extra order of differentiation, which is implemented here as explicit
  forward/tangent/reverse sweeps with closed-form layer Jacobians (GroupSort
  is a permutation, so its second derivative vanishes; tanh has an analytic
  second derivative).  No general-purpose autodiff is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericError

ACTIVATIONS = ("tanh", "groupsort")

NETWORK_FORMAT = "sdfco-network"
NETWORK_FORMAT_VERSION = 1


def group_sort(x: np.ndarray, groups: int = 1) -> np.ndarray:
    """Sort contiguous groups of the last axis in ascending order.

    With ``groups == 1`` the whole vector is sorted.  The map is a
    permutation of its input, hence norm preserving and 1-Lipschitz.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise InputError("group_sort expects at least a 1-d array")
    width = x.shape[-1]
    if groups < 1 or width % groups != 0:
        raise ConfigError(f"width {width} is not divisible into {groups} groups")
    parts = x.reshape(x.shape[:-1] + (groups, width // groups))
    return np.sort(parts, axis=-1, kind="stable").reshape(x.shape)


def _group_argsort(s: np.ndarray, groups: int) -> np.ndarray:
    """Permutation indices realizing group_sort on a (n, width) batch."""
    n, width = s.shape
    size = width // groups
    idx = np.argsort(s.reshape(n, groups, size), axis=-1, kind="stable")
    offsets = (np.arange(groups) * size)[None, :, None]
    return (idx + offsets).reshape(n, width)


def _spectral_norm_estimate(w: np.ndarray, iterations: int = 5) -> float:
    """Largest-singular-value estimate by power iteration on the Gram matrix."""
    rows, cols = w.shape
    # iterate on the smaller side; deterministic start vector
    if cols <= rows:
        a = w
    else:
        a = w.T
    v = np.linspace(1.0, 2.0, a.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        u = a @ v
        v = a.T @ u
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        v /= norm
    return float(np.linalg.norm(a @ v))


def bjorck_orthonormalize(
    w: np.ndarray, iterations: int = 15, beta: float = 0.5
) -> np.ndarray:
    """Drive the Gram matrix of ``w`` toward the identity.

    Order-1 Bjorck iteration ``A <- (1 + beta) A - beta A A^T A``.  The input
    is first divided by a spectral-norm estimate because the iteration only
    converges for singular values below sqrt(3).  For wide matrices the rows
    are orthonormalized (W W^T ~ I), for tall or square ones the columns
    (W^T W ~ I).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise InputError("expected a 2-d weight matrix")
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite weight matrix")
    scale = _spectral_norm_estimate(w)
    if scale == 0.0 or not np.isfinite(scale):
        raise NumericError("weight matrix has no usable spectral norm estimate")
    a = w / scale
    tall = a.shape[0] >= a.shape[1]
    for _ in range(iterations):
        if tall:
            a = (1.0 + beta) * a - beta * (a @ (a.T @ a))
        else:
            a = (1.0 + beta) * a - beta * ((a @ a.T) @ a)
    if not np.all(np.isfinite(a)):
        raise NumericError("Bjorck iteration diverged")
    return a


def gram_deviation(w: np.ndarray) -> float:
    """Max-norm distance of the (smaller-side) Gram matrix from the identity."""
    rows, cols = w.shape
    if cols <= rows:
        gram = w.T @ w
    else:
        gram = w @ w.T
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


@dataclass
class NetworkConfig:
    """Architecture description: widths include the input and output layers."""

    layer_widths: list[int]
    activation: str = "tanh"
    groups: int = 1
    lipschitz: bool = False

    def validate(self) -> None:
        widths = self.layer_widths
        if len(widths) < 2:
            raise ConfigError("need at least an input and an output width")
        if any(int(w) != w or w < 1 for w in widths):
            raise ConfigError(f"layer widths must be positive integers: {widths}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.groups < 1:
            raise ConfigError("groups must be >= 1")
        if self.activation == "groupsort":
            for w in widths[1:-1]:
                if w % self.groups != 0:
                    raise ConfigError(
                        f"hidden width {w} not divisible into {self.groups} groups"
                    )
        if self.lipschitz and self.activation != "groupsort":
            raise ConfigError("lipschitz networks require the groupsort activation")

    def to_dict(self) -> dict:
        return {
            "layer_widths": [int(w) for w in self.layer_widths],
            "activation": self.activation,
            "groups": int(self.groups),
            "lipschitz": bool(self.lipschitz),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        cfg = cls(
            layer_widths=list(data["layer_widths"]),
            activation=data["activation"],
            groups=int(data.get("groups", 1)),
            lipschitz=bool(data.get("lipschitz", False)),
        )
        cfg.validate()
        return cfg


@dataclass
class DenseLayer:
    """Affine layer; ``orthonormal`` layers are re-projected after updates."""

    weights: np.ndarray
    biases: np.ndarray
    orthonormal: bool = False

    def orthonormalize(self) -> None:
        if self.orthonormal:
            self.weights = bjorck_orthonormalize(self.weights)


class Network:
    """Scalar-output feedforward net with batched evaluation and VJPs."""

    def __init__(self, config: NetworkConfig, layers: list[DenseLayer]):
        config.validate()
        widths = config.layer_widths
        if len(layers) != len(widths) - 1:
            raise ConfigError("layer count does not match configured widths")
        for i, layer in enumerate(layers):
            if layer.weights.shape != (widths[i + 1], widths[i]):
                raise ConfigError(
                    f"layer {i} weights have shape {layer.weights.shape}, "
                    f"expected {(widths[i + 1], widths[i])}"
                )
            if layer.biases.shape != (widths[i + 1],):
                raise ConfigError(f"layer {i} biases have wrong shape")
        self.config = config
        self.layers = layers

    # -- construction ---------------------------------------------------

    @classmethod
    def initialize(cls, config: NetworkConfig, rng) -> "Network":
        """Uniform init scaled by 1/sqrt(fan_in); orthonormalized when Lipschitz."""
        config.validate()
        rng = np.random.default_rng(rng)
        widths = config.layer_widths
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w = rng.uniform(-1.0, 1.0, size=(fan_out, fan_in)) / np.sqrt(fan_in)
            layer = DenseLayer(w, np.zeros(fan_out), orthonormal=config.lipschitz)
            layer.orthonormalize()
            layers.append(layer)
        return cls(config, layers)

    @property
    def input_dim(self) -> int:
        return self.config.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.config.layer_widths[-1]

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(layer.weights, layer.biases) for layer in self.layers]

    def zero_grads(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (np.zeros_like(layer.weights), np.zeros_like(layer.biases))
            for layer in self.layers
        ]

    # -- evaluation -----------------------------------------------------

    def _as_batch(self, z) -> tuple[np.ndarray, bool]:
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        batch = z[None, :] if single else z
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise InputError(
                f"expected points of dimension {self.input_dim}, got shape {z.shape}"
            )
        return batch, single

    def _forward_cache(self, batch: np.ndarray):
        acts = [batch]
        perms: list[np.ndarray | None] = []
        last = len(self.layers) - 1
        a = batch
        for i, layer in enumerate(self.layers):
            s = a @ layer.weights.T + layer.biases
            if i == last:
                a = s
                perms.append(None)
            elif self.config.activation == "tanh":
                a = np.tanh(s)
                perms.append(None)
            else:
                perm = _group_argsort(s, self.config.groups)
                a = np.take_along_axis(s, perm, axis=1)
                perms.append(perm)
            acts.append(a)
        return acts, perms

    def forward(self, z) -> np.ndarray | float:
        """Network value; scalar for a single point, (n,) for a batch."""
        batch, single = self._as_batch(z)
        acts, _ = self._forward_cache(batch)
        out = acts[-1]
        if self.output_dim == 1:
            out = out[:, 0]
            return float(out[0]) if single else out
        return out[0] if single else out

    def value_and_grad(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Values h(z) and input gradients grad_z h(z) for a batch of points."""
        self._require_scalar_output()
        batch, single = self._as_batch(z)
        acts, perms = self._forward_cache(batch)
        h = acts[-1][:, 0]
        bar = np.ones((batch.shape[0], 1))
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            bar = self._activation_adjoint(bar, acts[i + 1], perms[i], i == last)
            bar = bar @ self.layers[i].weights
        if single:
            return float(h[0]), bar[0]
        return h, bar

    def _require_scalar_output(self) -> None:
        if self.output_dim != 1:
            raise ConfigError("gradient evaluation requires a scalar output")

    def _activation_adjoint(self, bar, act_out, perm, is_last):
        if is_last:
            return bar
        if self.config.activation == "tanh":
            return (1.0 - act_out**2) * bar
        inv = np.argsort(perm, axis=1, kind="stable")
        return np.take_along_axis(bar, inv, axis=1)

    # -- differentiation ------------------------------------------------

    def vjp(
        self,
        z,
        h_bar: np.ndarray,
        g_bar: np.ndarray | None = None,
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Cotangents of ``sum_i h_bar[i] h(z_i) + g_bar[i] . grad h(z_i)``.

        Returns per-layer parameter gradients and the gradient with respect
        to the input points.  The ``g_bar`` path adds a forward tangent sweep
        whose reverse pass carries the activation second derivatives, which
        is what makes losses containing grad_z h differentiable in the
        parameters.
        """
        self._require_scalar_output()
        batch, _ = self._as_batch(z)
        n = batch.shape[0]
        h_bar = np.asarray(h_bar, dtype=float).reshape(n)
        acts, perms = self._forward_cache(batch)
        last = len(self.layers) - 1
        tangent = g_bar is not None

        adots: list[np.ndarray] = []
        sdots: list[np.ndarray] = []
        if tangent:
            adot = np.asarray(g_bar, dtype=float).reshape(batch.shape)
            adots.append(adot)
            for i, layer in enumerate(self.layers):
                sdot = adot @ layer.weights.T
                sdots.append(sdot)
                if i == last:
                    adot = sdot
                elif self.config.activation == "tanh":
                    adot = (1.0 - acts[i + 1] ** 2) * sdot
                else:
                    adot = np.take_along_axis(sdot, perms[i], axis=1)
                adots.append(adot)

        grads = self.zero_grads()
        a_bar = np.zeros((n, self.output_dim))
        a_bar[:, 0] = h_bar
        adot_bar = None
        if tangent:
            adot_bar = np.zeros((n, self.output_dim))
            adot_bar[:, 0] = 1.0

        for i in range(last, -1, -1):
            sdot_bar = None
            if i == last:
                s_bar = a_bar
                sdot_bar = adot_bar
            elif self.config.activation == "tanh":
                out = acts[i + 1]
                deriv = 1.0 - out**2
                s_bar = deriv * a_bar
                if tangent:
                    second = -2.0 * out * deriv
                    s_bar = s_bar + second * sdots[i] * adot_bar
                    sdot_bar = deriv * adot_bar
            else:
                inv = np.argsort(perms[i], axis=1, kind="stable")
                s_bar = np.take_along_axis(a_bar, inv, axis=1)
                if tangent:
                    sdot_bar = np.take_along_axis(adot_bar, inv, axis=1)
            gw, gb = grads[i]
            gw += s_bar.T @ acts[i]
            gb += s_bar.sum(axis=0)
            if tangent:
                gw += sdot_bar.T @ adots[i]
            a_bar = s_bar @ self.layers[i].weights
            if tangent:
                adot_bar = sdot_bar @ self.layers[i].weights
        return grads, a_bar

    # -- serialization --------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format": NETWORK_FORMAT,
            "version": NETWORK_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "biases": layer.biases.tolist(),
                    "orthonormal": bool(layer.orthonormal),
                }
                for layer in self.layers
            ],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, data: dict) -> "Network":
        if data.get("format") != NETWORK_FORMAT:
            raise ConfigError("not a serialized network")
        if data.get("version") != NETWORK_FORMAT_VERSION:
            raise ConfigError(f"unsupported network version {data.get('version')!r}")
        config = NetworkConfig.from_dict(data["config"])
        layers = [
            DenseLayer(
                np.array(entry["weights"], dtype=float),
                np.array(entry["biases"], dtype=float),
                orthonormal=bool(entry["orthonormal"]),
            )
            for entry in data["layers"]
        ]
        return cls(config, layers)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class AdamState:
    """Adam moments for one network; bias correction uses ``step_count``."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moments: list = field(default_factory=list)
    second_moments: list = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, learning_rate: float, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        for w, b in net.parameters():
            state.first_moments.append((np.zeros_like(w), np.zeros_like(b)))
            state.second_moments.append((np.zeros_like(w), np.zeros_like(b)))
        return state


def adam_step(
    net: Network,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
) -> None:
    """One bias-corrected Adam update in place; orthonormal layers re-projected."""
    if len(grads) != len(net.layers):
        raise InputError("gradient list does not match network layers")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for layer, grad_pair, m_pair, v_pair in zip(
        net.layers, grads, state.first_moments, state.second_moments
    ):
        for param, grad, m, v in (
            (layer.weights, grad_pair[0], m_pair[0], v_pair[0]),
            (layer.biases, grad_pair[1], m_pair[1], v_pair[1]),
        ):
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad**2
            param -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
    for layer in net.layers:
        layer.orthonormalize()
