"""Linear scoring models with sigmoid (multi-label) and softmax heads."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

HEADS = ("sigmoid", "softmax")

__all__ = [
    "LinearModel",
    "init_linear",
    "forward",
    "predict_labels",
    "rank_labels",
    "rank_matrix",
    "save_model",
    "load_model",
]


@dataclass
class LinearModel:
    """z = Wx + b squashed through the configured head.

    The head is fixed at construction; parameters are mutated only by the
    trainer, so forward passes on a frozen model are safe concurrently.
    """

    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    head: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (K, d) with bias (K,)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("model parameters must be finite")

    @property
    def n_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def init_linear(d: int, n_labels: int, head: str, seed: int) -> LinearModel:
    """Zero bias, Gaussian weights with scale 1/sqrt(d)."""
    if d < 1 or n_labels < 1:
        raise ValueError("d and n_labels must be positive")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n_labels, d))
    return LinearModel(W, np.zeros(n_labels), head)


def _logits(model: LinearModel, x) -> tuple[np.ndarray, bool]:
    single = False
    if sp.issparse(x):
        X = x.tocsr()
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            single = True
            arr = arr[None, :]
        X = arr
    if X.shape[1] != model.n_features:
        raise ValueError(f"input has {X.shape[1]} features, model expects {model.n_features}")
    Z = np.asarray(X @ model.weights.T + model.bias)
    return Z, single


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: LinearModel, x) -> np.ndarray:
    """Score an instance (1-d) or a batch (2-d / sparse); scores lie in [0, 1]."""
    Z, single = _logits(model, x)
    F = expit(Z) if model.head == "sigmoid" else softmax(Z)
    return F[0] if single else F


def predict_labels(scores: np.ndarray) -> np.ndarray:
    """Threshold at 0.5, strictly: a score of exactly 0.5 is not predicted."""
    return (np.asarray(scores) > 0.5).astype(np.uint8)


def rank_labels(scores: np.ndarray) -> np.ndarray:
    """Labels ordered by descending score; ties go to the lower label index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("rank_labels takes a single score vector")
    return np.argsort(-scores, kind="stable")


def rank_matrix(scores: np.ndarray) -> np.ndarray:
    """(n, K) matrix of 1-based ranks per instance, with the same tie rule."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, scores.shape[1] + 1)[None, :], axis=1)
    return ranks


# Checkpoint format: header "d K head", then K lines of d+1 decimals
# (weight row then bias entry) at 17 significant digits for exact round-trip.


def save_model(model: LinearModel, path: str | Path) -> None:
    lines = [f"{model.n_features} {model.n_labels} {model.head}"]
    for k in range(model.n_labels):
        vals = list(model.weights[k]) + [model.bias[k]]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("empty checkpoint")
    parts = lines[0].split()
    if len(parts) != 3:
        raise ValueError("checkpoint header must be 'd K head'")
    d, K, head = int(parts[0]), int(parts[1]), parts[2]
    if len(lines) < K + 1:
        raise ValueError(f"checkpoint declares {K} rows but has {len(lines) - 1}")
    W = np.empty((K, d))
    b = np.empty(K)
    for k in range(K):
        vals = np.array([float(t) for t in lines[k + 1].split()])
        if vals.shape[0] != d + 1:
            raise ValueError(f"checkpoint row {k} has {vals.shape[0]} values, expected {d + 1}")
        W[k] = vals[:d]
        b[k] = vals[d]
    return LinearModel(W, b, head)
