"""Domain value types and the closed-form loss algebra.

All matrices are dense float64. Labels are 0-based inside the library and
1-based in every file or wire format.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, DimensionError, UndefinedLossError

PROB_TOL = 1e-9


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dimensions:
    L: int
    K: int = 1

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ConstructionError(f"label count must be an integer >= 2, got {self.L}")
        if int(self.K) != self.K or self.K < 1:
            raise ConstructionError(f"difficulty count must be an integer >= 1, got {self.K}")

    @property
    def n_partitions(self) -> int:
        return self.L * self.K


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Joint distribution ``C[i, j] = Pr[true=i, predicted=j]``."""

    entries: np.ndarray

    def __post_init__(self):
        e = _frozen(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 2:
            raise DimensionError(f"confusion matrix must be square L x L, got shape {e.shape}")
        if not np.all(np.isfinite(e)) or e.min() < 0.0 or e.max() > 1.0:
            raise ConstructionError("confusion entries must lie in [0, 1]")
        if abs(e.sum() - 1.0) > PROB_TOL:
            raise ConstructionError(f"confusion entries sum to {e.sum()!r}, expected 1")
        object.__setattr__(self, "entries", e)

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.entries))

    def row_marginals(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def conditionals(self) -> np.ndarray:
        """Row-normalised ``Pr[predicted=j | true=i]``; empty rows become uniform."""
        rows = self.entries.sum(axis=1, keepdims=True)
        out = np.full_like(self.entries, 1.0 / self.L)
        np.divide(self.entries, rows, out=out, where=rows > 0)
        return out


@dataclass(frozen=True, eq=False)
class ShiftMatrix:
    entries: np.ndarray

    def __post_init__(self):
        e = _frozen(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionError(f"shift matrix must be square, got shape {e.shape}")
        if not np.all(np.isfinite(e)) or np.abs(e).max(initial=0.0) > 1.0:
            raise ConstructionError("shift entries must lie in [-1, 1]")
        object.__setattr__(self, "entries", e)

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def accuracy_change(self) -> float:
        return float(np.trace(self.entries))


@dataclass(frozen=True, eq=False)
class PartitionWeights:
    """Partition masses ``p[i, k] = Pr[x in D_{i,k}]``, all strictly positive."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        if p.ndim == 1:
            p = _frozen(p[:, None])
        if p.ndim != 2 or p.shape[0] < 2:
            raise DimensionError(f"partition weights must be L x K with L >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ConstructionError("partition weights must be finite")
        if np.any(p <= 0.0):
            bad = tuple(int(v) for v in np.argwhere(p <= 0.0)[0])
            raise ConstructionError(f"partition {bad} has zero mass; empty partitions are not supported")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ConstructionError(f"partition weights sum to {p.sum()!r}, expected 1")
        object.__setattr__(self, "p", p)

    @property
    def dims(self) -> Dimensions:
        return Dimensions(*self.p.shape)

    @property
    def L(self) -> int:
        return self.p.shape[0]

    @property
    def K(self) -> int:
        return self.p.shape[1]

    @classmethod
    def from_counts(cls, counts) -> "PartitionWeights":
        counts = np.asarray(counts, dtype=np.float64)
        return cls(counts / counts.sum())


@dataclass(frozen=True, eq=False)
class LabelDistribution:
    probs: np.ndarray

    def __post_init__(self):
        q = _frozen(self.probs)
        if q.ndim != 1 or q.size < 2:
            raise DimensionError("label distribution must be a vector of length L >= 2")
        if not np.all(np.isfinite(q)) or q.min() < 0.0 or q.max() > 1.0:
            raise ConstructionError("label probabilities must lie in [0, 1]")
        if abs(q.sum() - 1.0) > PROB_TOL:
            raise ConstructionError(f"label probabilities sum to {q.sum()!r}, expected 1")
        object.__setattr__(self, "probs", q)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    W: np.ndarray

    def __post_init__(self):
        w = _frozen(self.W)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < 0.0:
            raise ConstructionError("weights must be finite and nonnegative")
        if not np.any(w > 0.0):
            raise ConstructionError("weight matrix is all zeros")
        object.__setattr__(self, "W", w)

    @classmethod
    def ones(cls, L: int) -> "WeightMatrix":
        return cls(np.ones((L, L)))


@dataclass(frozen=True, eq=False)
class Allocation:
    """Integer sample counts per partition."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim == 1:
            raw = raw[:, None]
        if raw.ndim != 2:
            raise DimensionError(f"allocation must be L x K, got shape {raw.shape}")
        if np.any(raw < 0) or np.any(raw != np.round(raw)):
            raise ConstructionError("allocation counts must be nonnegative integers")
        object.__setattr__(self, "counts", _frozen(raw, dtype=np.int64))

    @property
    def N(self) -> int:
        return int(self.counts.sum())


def _entries(m) -> np.ndarray:
    if isinstance(m, (ConfusionMatrix, ShiftMatrix)):
        return m.entries
    return np.asarray(m, dtype=np.float64)


def shift_between(new, old) -> ShiftMatrix:
    """Entrywise ``new - old``."""
    a, b = _entries(new), _entries(old)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare {a.shape} with {b.shape}")
    return ShiftMatrix(a - b)


def weighted_frobenius_sq(delta, W=None) -> float:
    d = _entries(delta)
    if W is None:
        return float(np.sum(d * d))
    w = W.W if isinstance(W, WeightMatrix) else np.asarray(W, dtype=np.float64)
    if w.shape != d.shape:
        raise DimensionError(f"weights {w.shape} do not match shift {d.shape}")
    wd = w * d
    return float(np.sum(wd * wd))


def _p_array(p) -> np.ndarray:
    return p.p if isinstance(p, PartitionWeights) else np.asarray(p, dtype=np.float64)


def _counts_array(alloc) -> np.ndarray:
    return alloc.counts if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=np.float64)


def expected_loss_closed_form(alloc, p, sigma) -> float:
    """``sum p^2 sigma^2 / N`` over partitions, for a deterministic allocation.

    ``sigma`` holds uncertainty scores as standard deviations (not squared).
    ``alloc`` may be real-valued, which is how the continuous optimum is
    evaluated.
    """
    n = np.asarray(_counts_array(alloc), dtype=np.float64)
    p = _p_array(p)
    sigma = np.asarray(sigma, dtype=np.float64)
    n, sigma = n.reshape(p.shape), sigma.reshape(p.shape)
    weight = (p * sigma) ** 2
    active = weight > 0.0
    if np.any(active & (n <= 0)):
        bad = tuple(int(v) for v in np.argwhere(active & (n <= 0))[0])
        raise UndefinedLossError(f"partition {bad} has positive p*sigma but no samples")
    return float(np.sum(weight[active] / n[active]))


def optimal_loss(N, p, sigma) -> float:
    """``(sum p sigma)^2 / N``, the loss of the real-valued optimal allocation."""
    if N < 1:
        raise UndefinedLossError(f"budget must be >= 1, got {N}")
    s = float(np.sum(_p_array(p) * np.asarray(sigma, dtype=np.float64).reshape(_p_array(p).shape)))
    return s * s / N


def continuous_optimal_allocation(N, p, sigma) -> np.ndarray:
    """Real-valued optimum ``N * p sigma / sum(p sigma)``."""
    p = _p_array(p)
    w = p * np.asarray(sigma, dtype=np.float64).reshape(p.shape)
    total = w.sum()
    if total <= 0:
        raise UndefinedLossError("all partitions have zero p*sigma")
    return N * w / total
