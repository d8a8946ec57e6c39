"""Adam optimization and the training loops.

Training is a pure function of (data, config, seed): the model init, the
epoch shuffles, and the update arithmetic are all driven by the config seed,
so reruns are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .complementary import ComplementaryDataset
from .dataset import MultiLabelDataset
from .loss import ClampPolicy, DEFAULT_CLAMP, batch_objective
from .model import LinearModel, init_linear
from .transition import validate_transition

__all__ = [
    "TrainConfig",
    "AdamState",
    "NonFiniteGradientError",
    "init_adam",
    "adam_step",
    "TrainResult",
    "train_cl_predictor",
    "train_mlcl",
    "train_supervised",
    "train_clrl",
]

LEARNING_RATE_GRID = (1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    batch_size: int = 256
    epochs: int = 200
    beta: float = 1.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive and weight_decay nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam constants")


class NonFiniteGradientError(RuntimeError):
    """A gradient turned non-finite; the step is aborted with diagnostics."""


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update with coupled L2 weight decay.

    Weight decay is added to the gradient before the moment updates.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state shapes disagree")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(np.asarray(g)))[0]
            raise NonFiniteGradientError(
                f"non-finite gradient in parameter {i} at index {tuple(int(x) for x in bad)} (step {state.t + 1})"
            )
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g + cfg.weight_decay * p
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g
        m_hat = m / (1.0 - cfg.adam_beta1**t)
        v_hat = v / (1.0 - cfg.adam_beta2**t)
        new_params.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


@dataclass
class TrainResult:
    model: LinearModel
    epoch_losses: list[float] = field(default_factory=list)


def _run_loop(X, n: int, d: int, n_labels: int, head: str, cfg: TrainConfig, batch_kwargs_fn) -> TrainResult:
    """Shared minibatch loop.  `batch_kwargs_fn(idx)` supplies the loss kind and
    targets for a batch of instance indices."""
    model = init_linear(d, n_labels, head, cfg.seed)
    state = init_adam([model.weights, model.bias])
    shuffle_rng = np.random.default_rng((cfg.seed, 0xB0))
    curve: list[float] = []
    for _ in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            kind, kwargs = batch_kwargs_fn(idx)
            value, gW, gb = batch_objective(model, X[idx], kind, **kwargs)
            (model.weights, model.bias), state = adam_step(
                [model.weights, model.bias], [gW, gb], state, cfg
            )
            epoch_loss += value * idx.size
        curve.append(epoch_loss / n)
    return TrainResult(model=model, epoch_losses=curve)


def train_cl_predictor(cds: ComplementaryDataset, cfg: TrainConfig) -> TrainResult:
    """Softmax predictor of the complementary label, trained with cross entropy."""
    cl = cds.cl

    def batch(idx):
        return "ce_softmax", {"cl": cl[idx]}

    return _run_loop(cds.features, cds.n_instances, cds.n_features, cds.n_labels, "softmax", cfg, batch)


def train_mlcl(
    cds: ComplementaryDataset, T: np.ndarray, cfg: TrainConfig, clamp: ClampPolicy = DEFAULT_CLAMP
) -> TrainResult:
    """Sigmoid multi-label classifier trained on the transition-composed loss
    (complementary BCE plus cfg.beta times the squared-error regularizer)."""
    validate_transition(T)
    cl = cds.cl

    def batch(idx):
        return "mlcl", {"cl": cl[idx], "T": T, "beta": cfg.beta, "clamp": clamp}

    return _run_loop(cds.features, cds.n_instances, cds.n_features, cds.n_labels, "sigmoid", cfg, batch)


def train_supervised(ds: MultiLabelDataset, cfg: TrainConfig) -> TrainResult:
    """Fully supervised sigmoid classifier under binary cross entropy."""
    y = ds.y.astype(np.float64)

    def batch(idx):
        return "bce_supervised", {"y": y[idx]}

    return _run_loop(ds.features, ds.n_instances, ds.n_features, ds.n_labels, "sigmoid", cfg, batch)


def train_clrl(
    cds: ComplementaryDataset, T: np.ndarray, cfg: TrainConfig, clamp: ClampPolicy = DEFAULT_CLAMP
) -> TrainResult:
    """Training from one complementary label plus a partial relevant vector."""
    if cds.relevant is None:
        raise ValueError("clrl training requires relevant-label vectors on every instance")
    validate_transition(T)
    cl = cds.cl
    rel = cds.relevant.astype(np.float64)

    def batch(idx):
        return "clrl", {"cl": cl[idx], "relevant": rel[idx], "T": T, "clamp": clamp}

    return _run_loop(cds.features, cds.n_instances, cds.n_features, cds.n_labels, "sigmoid", cfg, batch)
