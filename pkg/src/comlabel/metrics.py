"""The five multi-label evaluation criteria.

All metrics consume raw score vectors and ground-truth relevance vectors and
share one deterministic ranking pass (descending score, ties to the lower
label index), so every value is reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import predict_labels, rank_matrix

__all__ = [
    "MetricsReport",
    "hamming_loss",
    "ranking_loss",
    "one_error",
    "coverage",
    "average_precision",
    "evaluate_all",
]


@dataclass(frozen=True)
class MetricsReport:
    hamming_loss: float
    ranking_loss: float
    one_error: float
    coverage: float
    average_precision: float
    n_evaluated: int

    METRIC_NAMES = ("hamming_loss", "ranking_loss", "one_error", "coverage", "average_precision")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.METRIC_NAMES}


def _validated(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(truth))
    if S.shape != Y.shape:
        raise ValueError(f"scores {S.shape} and truth {Y.shape} disagree")
    if S.shape[0] == 0:
        raise ValueError("empty evaluation")
    if not np.all(np.isfinite(S)):
        raise ValueError("scores must be finite")
    if np.any((Y != 0) & (Y != 1)):
        raise ValueError("truth entries must be 0 or 1")
    sums = Y.sum(axis=1)
    bad = np.flatnonzero((sums == 0) | (sums == Y.shape[1]))
    if bad.size:
        raise ValueError(f"instance {bad[0]} has an empty or full truth vector")
    return S, Y.astype(np.float64)


def hamming_loss(scores, truth) -> float:
    """Fraction of label slots where the thresholded prediction disagrees."""
    S, Y = _validated(scores, truth)
    pred = predict_labels(S)
    return float(np.mean(pred != Y.astype(np.uint8)))


def ranking_loss(scores, truth) -> float:
    """Mean fraction of (relevant, irrelevant) pairs ranked in the wrong order."""
    S, Y = _validated(scores, truth)
    ranks = rank_matrix(S).astype(np.float64)
    rel = Y == 1
    # pair (a relevant, b irrelevant) is reversed when rank(a) > rank(b)
    reversed_pairs = ((ranks[:, :, None] > ranks[:, None, :]) & rel[:, :, None] & ~rel[:, None, :]).sum(axis=(1, 2))
    totals = rel.sum(axis=1) * (~rel).sum(axis=1)
    return float(np.mean(reversed_pairs / totals))


def one_error(scores, truth) -> float:
    """Fraction of instances whose top-ranked label is irrelevant."""
    S, Y = _validated(scores, truth)
    ranks = rank_matrix(S)
    top = np.argmin(ranks, axis=1)
    return float(np.mean(Y[np.arange(Y.shape[0]), top] == 0))


def coverage(scores, truth) -> float:
    """Mean depth of the ranking needed to cover all relevant labels, scaled to [0, 1)."""
    S, Y = _validated(scores, truth)
    K = Y.shape[1]
    ranks = rank_matrix(S).astype(np.float64)
    deepest = np.where(Y == 1, ranks, -np.inf).max(axis=1)
    return float(np.mean((deepest - 1.0) / K))


def average_precision(scores, truth) -> float:
    """Mean over instances of the precision at each relevant label's rank."""
    S, Y = _validated(scores, truth)
    ranks = rank_matrix(S).astype(np.float64)
    rel = Y == 1
    n = Y.shape[0]
    per_instance = np.empty(n)
    for i in range(n):
        r = ranks[i, rel[i]]
        hits_at = (r[:, None] >= r[None, :]).sum(axis=1)  # relevant labels ranked at or above
        per_instance[i] = np.mean(hits_at / r)
    return float(np.mean(per_instance))


def evaluate_all(scores, truth) -> MetricsReport:
    """All five criteria with a single ranking pass per instance."""
    S, Y = _validated(scores, truth)
    ranks = rank_matrix(S).astype(np.float64)
    rel = Y == 1
    n, K = Y.shape

    pred = predict_labels(S)
    ham = float(np.mean(pred != Y.astype(np.uint8)))

    reversed_pairs = ((ranks[:, :, None] > ranks[:, None, :]) & rel[:, :, None] & ~rel[:, None, :]).sum(axis=(1, 2))
    totals = rel.sum(axis=1) * (~rel).sum(axis=1)
    rank_loss = float(np.mean(reversed_pairs / totals))

    top = np.argmin(ranks, axis=1)
    one_err = float(np.mean(Y[np.arange(n), top] == 0))

    deepest = np.where(rel, ranks, -np.inf).max(axis=1)
    cov = float(np.mean((deepest - 1.0) / K))

    ap_terms = np.empty(n)
    for i in range(n):
        r = ranks[i, rel[i]]
        hits_at = (r[:, None] >= r[None, :]).sum(axis=1)
        ap_terms[i] = np.mean(hits_at / r)
    ap = float(np.mean(ap_terms))

    return MetricsReport(ham, rank_loss, one_err, cov, ap, n_evaluated=n)
