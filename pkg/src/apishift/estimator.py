"""Uncertainty scores, running per-partition statistics and shift fusion."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ConfusionMatrix, LabelDistribution, PartitionWeights, ShiftMatrix
from .errors import IncompleteEstimateError, InsufficientSamplesError


def score_from_distribution(mu) -> float:
    """Uncertainty score ``1 - sum_j mu_j^2`` of a predicted-label distribution."""
    q = mu.probs if isinstance(mu, LabelDistribution) else np.asarray(mu, dtype=np.float64)
    return float(1.0 - np.dot(q, q))


def label_counts(labels, L=None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be nonnegative")
    return np.bincount(labels, minlength=L or 0)


def weighted_score_from_counts(H, n, row_weights=None) -> float:
    """``sum_j w_j^2 H_j (n - H_j) / (n (n - 1))``.

    Unbiased for ``sum_j w_j^2 mu_j (1 - mu_j)``; with unit weights this is the
    plain batch uncertainty score.
    """
    H = np.asarray(H, dtype=np.float64)
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {n}")
    if H.sum() != n:
        raise ValueError(f"label counts sum to {H.sum()}, expected {n}")
    w2 = 1.0 if row_weights is None else np.asarray(row_weights, dtype=np.float64) ** 2
    return float(np.sum(w2 * H * (n - H)) / (n * (n - 1.0)))


def batch_score(labels) -> float:
    """Unbiased uncertainty score of a label sample, via label counts."""
    labels = np.asarray(labels)
    n = labels.size
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 labels, got {n}")
    _, H = np.unique(labels, return_counts=True)
    return weighted_score_from_counts(H, n)


@dataclass
class PartitionStats:
    """Running statistics of one partition."""

    L: int
    N: int = 0
    mu_hat: np.ndarray = field(default=None)
    sigma2_hat: float = 0.0
    H: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mu_hat is None:
            self.mu_hat = np.zeros(self.L)
        if self.H is None:
            self.H = np.zeros(self.L, dtype=np.int64)

    def observe(self, label: int) -> "PartitionStats":
        if not 0 <= label < self.L:
            raise ValueError(f"label {label} outside [0, {self.L})")
        n = np.array([self.N], dtype=np.int64)
        mu = self.mu_hat.reshape(1, -1)
        s2 = np.array([self.sigma2_hat])
        H = self.H.reshape(1, -1)
        kernels.observe_update(n, mu, s2, H, 0, int(label))
        self.N = int(n[0])
        self.sigma2_hat = float(s2[0])
        return self

    def observe_many(self, labels) -> "PartitionStats":
        for lab in labels:
            self.observe(int(lab))
        return self


def observe(stats: PartitionStats, predicted_label: int) -> PartitionStats:
    return stats.observe(predicted_label)


class StatsGrid:
    """Running statistics for all ``L x K`` partitions of one run."""

    def __init__(self, L: int, K: int, row_weights=None):
        self.L, self.K = L, K
        self.n, self.mu, self.sigma2, self.H = kernels.new_state(L * K, L)
        self.weighted = row_weights is not None
        self.wsq = flat_row_weights(row_weights, L, K)
        self.score2 = np.zeros(L * K)

    def flat(self, i: int, k: int) -> int:
        return i * self.K + k

    def observe(self, i: int, k: int, label: int) -> float:
        if not 0 <= label < self.L:
            raise ValueError(f"label {label} outside [0, {self.L})")
        f = self.flat(i, k)
        kernels.observe_update(self.n, self.mu, self.sigma2, self.H, f, label)
        if self.weighted:
            self.score2[f] = kernels.weighted_score(self.H, f, self.n[f], self.wsq)
        else:
            self.score2[f] = self.sigma2[f]
        return float(self.score2[f])

    def partition(self, i: int, k: int) -> PartitionStats:
        f = self.flat(i, k)
        return PartitionStats(
            L=self.L,
            N=int(self.n[f]),
            mu_hat=self.mu[f].copy(),
            sigma2_hat=float(self.sigma2[f]),
            H=self.H[f].copy(),
        )

    @property
    def counts(self) -> np.ndarray:
        return self.n.reshape(self.L, self.K).copy()

    @classmethod
    def from_arrays(cls, L, K, n, mu, sigma2, H, row_weights=None) -> "StatsGrid":
        g = cls(L, K, row_weights)
        P = L * K
        g.n = np.asarray(n, dtype=np.int64).reshape(P)
        g.mu = np.asarray(mu, dtype=np.float64).reshape(P, L)
        g.sigma2 = np.asarray(sigma2, dtype=np.float64).reshape(P)
        g.H = np.asarray(H, dtype=np.int64).reshape(P, L)
        n, H = g.n, g.H
        if g.weighted:
            g.score2 = np.array([kernels.weighted_score(H, f, n[f], g.wsq) for f in range(L * K)])
        else:
            g.score2 = g.sigma2.copy()
        return g


def flat_row_weights(row_weights, L, K) -> np.ndarray:
    """Per-partition squared weights: partition (i, k) uses row i of W."""
    if row_weights is None:
        return np.ones((L * K, L))
    W = np.asarray(row_weights, dtype=np.float64)
    return np.repeat(W * W, K, axis=0)


def fuse_shift(stats: StatsGrid, p: PartitionWeights, C_old: ConfusionMatrix, prior=None) -> ShiftMatrix:
    """Combine partition estimates into ``sum_k p mu_hat - C_old``.

    Partitions with no samples raise unless ``prior`` supplies a
    ``(L*K, L)`` fallback distribution for them.
    """
    mu = stats.mu
    empty = stats.n == 0
    if np.any(empty):
        if prior is None:
            f = int(np.argmax(empty))
            raise IncompleteEstimateError(f"partition {divmod(f, stats.K)} was never sampled")
        mu = np.where(empty[:, None], prior, mu)
    c_old = C_old.entries if isinstance(C_old, ConfusionMatrix) else np.asarray(C_old, dtype=np.float64)
    return ShiftMatrix(kernels.fuse(mu, p.p.ravel(), c_old, stats.L, stats.K))
