"""Full-batch Adam training of feasibility surrogates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .losses import (
    BASELINE_KINDS,
    GradientAugmentedLoss,
    HingeLoss,
    HybridLoss,
    JFitLoss,
    LabeledSample,
    add_grads,
    scale_grads,
    sdf_regularizer_grad,
)
from .nn import AdamState, Network, NetworkConfig, adam_step

log = logging.getLogger(__name__)

LR_POLICIES = ("fixed", "sampled")


@dataclass
class TrainConfig:
    """Shared knobs for the distance-surrogate and baseline trainers.

    ``lr_policy="sampled"`` draws ``lr_draws`` log-uniform learning rates
    from ``lr_range``, trains one candidate per draw and keeps the network
    with the lowest final mean data loss over the full dataset.
    """

    hidden_widths: tuple[int, ...] = (8, 8, 8)
    groups: int = 1
    epochs: int = 2000
    learning_rate: float = 1e-3
    lr_policy: str = "fixed"
    lr_draws: int = 10
    lr_range: tuple[float, float] = (1e-5, 1e-3)
    reg_weight: float = 0.1
    reg_samples: int = 64
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    seed: int = 0

    def validate(self, dim: int, need_domain: bool) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.lr_policy not in LR_POLICIES:
            raise ConfigError(f"unknown learning-rate policy {self.lr_policy!r}")
        if self.lr_policy == "sampled" and self.lr_draws < 1:
            raise ConfigError("sampled policy needs at least one draw")
        if self.learning_rate <= 0 or self.lr_range[0] <= 0 or self.lr_range[1] <= 0:
            raise ConfigError("learning rates must be positive")
        if self.reg_weight < 0 or self.reg_samples < 0:
            raise ConfigError("regularizer settings cannot be negative")
        if need_domain and self.reg_weight > 0:
            if self.lower is None or self.upper is None:
                raise ConfigError("regularizer sampling needs domain bounds")
            lower = np.asarray(self.lower, dtype=float)
            upper = np.asarray(self.upper, dtype=float)
            if lower.shape != (dim,) or upper.shape != (dim,):
                raise ConfigError("domain bounds must match the point dimension")
            if np.any(upper <= lower):
                raise ConfigError("domain upper bounds must exceed lower bounds")


def _dataset_dim(dataset: list[LabeledSample]) -> int:
    if not dataset:
        raise InputError("cannot train on an empty dataset")
    return np.asarray(dataset[0].point).shape[0]


def _learning_rates(config: TrainConfig, rng: np.random.Generator) -> list[float]:
    if config.lr_policy == "fixed":
        return [config.learning_rate]
    lo, hi = math.log(config.lr_range[0]), math.log(config.lr_range[1])
    return [float(math.exp(v)) for v in rng.uniform(lo, hi, size=config.lr_draws)]


def train_sdf(dataset: list[LabeledSample], config: TrainConfig) -> Network:
    """Train a 1-Lipschitz distance surrogate on labeled projection samples.

    The data term is the gradient-augmented loss; the signed-distance
    regularizer is evaluated on fresh uniform samples from the domain box at
    every step and added with weight ``reg_weight``.
    """
    dim = _dataset_dim(dataset)
    config.validate(dim, need_domain=True)
    net_config = NetworkConfig(
        [dim, *config.hidden_widths, 1],
        activation="groupsort",
        groups=config.groups,
        lipschitz=True,
    )
    loss = GradientAugmentedLoss(dataset)
    root = np.random.SeedSequence(config.seed)
    lr_seq, fit_seq = root.spawn(2)
    rates = _learning_rates(config, np.random.default_rng(lr_seq))
    candidates = []
    for rate, child in zip(rates, fit_seq.spawn(len(rates))):
        init_seq, reg_seq = child.spawn(2)
        net = Network.initialize(net_config, np.random.default_rng(init_seq))
        _fit(net, loss, rate, config, np.random.default_rng(reg_seq))
        final = loss.value(net)
        candidates.append((final, net))
        log.debug("train_sdf lr=%.3g final data loss %.6g", rate, final)
    best = min(range(len(candidates)), key=lambda i: candidates[i][0])
    return candidates[best][1]


def train_baseline(
    dataset: list[LabeledSample], kind: str, config: TrainConfig
) -> Network:
    """Train a tanh-network baseline: squared-distance fit, hinge, or hybrid."""
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"unknown baseline kind {kind!r}")
    dim = _dataset_dim(dataset)
    config.validate(dim, need_domain=False)
    net_config = NetworkConfig([dim, *config.hidden_widths, 1], activation="tanh")
    loss = {
        "jfit": JFitLoss,
        "hinge": HingeLoss,
        "hybrid": HybridLoss,
    }[kind](dataset)
    root = np.random.SeedSequence(config.seed)
    lr_seq, fit_seq = root.spawn(2)
    rates = _learning_rates(config, np.random.default_rng(lr_seq))
    baseline_cfg = replace(config, reg_weight=0.0)
    candidates = []
    for rate, child in zip(rates, fit_seq.spawn(len(rates))):
        init_seq, reg_seq = child.spawn(2)
        net = Network.initialize(net_config, np.random.default_rng(init_seq))
        _fit(net, loss, rate, baseline_cfg, np.random.default_rng(reg_seq))
        candidates.append((loss.value(net), net))
    best = min(range(len(candidates)), key=lambda i: candidates[i][0])
    return candidates[best][1]


def _fit(
    net: Network,
    loss,
    learning_rate: float,
    config: TrainConfig,
    reg_rng: np.random.Generator,
) -> None:
    state = AdamState.for_network(net, learning_rate)
    use_reg = config.reg_weight > 0.0 and config.reg_samples > 0
    if use_reg:
        lower = np.asarray(config.lower, dtype=float)
        upper = np.asarray(config.upper, dtype=float)
    for step in range(config.epochs):
        value, grads = loss.value_and_grad(net)
        if use_reg:
            points = reg_rng.uniform(lower, upper, size=(config.reg_samples, net.input_dim))
            reg_value, reg_grads = sdf_regularizer_grad(net, points)
            value = value + config.reg_weight * reg_value
            grads = add_grads(grads, scale_grads(reg_grads, config.reg_weight))
        if not math.isfinite(value):
            raise NumericError(f"non-finite training loss at step {step}")
        adam_step(net, grads, state)
