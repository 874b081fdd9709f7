"""Stopping rules and required sample sizes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import PartitionWeights
from .errors import ConfigError, InsufficientSamplesError
from .estimator import StatsGrid


@dataclass(frozen=True)
class ConfidenceParams:
    """Target Frobenius error ``epsilon`` at confidence ``1 - alpha``.

    ``delta`` is the per-event failure probability of the score bounds; when
    omitted it is set per run to ``alpha / (L K N)``.
    """

    epsilon: float = 0.01
    alpha: float = 0.05
    delta: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")

    def delta_for(self, L: int, K: int, N: int) -> float:
        return self.delta if self.delta is not None else self.alpha / (L * K * N)


def bound_constant(alpha: float) -> float:
    """Two-sided Hoeffding constant: ``sqrt(c/n)`` bounds a [0,1] mean w.p. 1 - alpha."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return math.log(2.0 / alpha) / 2.0


def required_budget_flat(params: ConfidenceParams) -> int:
    c = bound_constant(params.alpha)
    return max(1, math.ceil(c / params.epsilon ** 2))


def sigma_bound(t: int, delta: float) -> float:
    """Half-width of the score band after ``t`` samples, per-event level ``delta``."""
    if t < 2:
        raise InsufficientSamplesError(f"score bound needs t >= 2, got {t}")
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    return float(kernels.sigma_width(float(t), math.log(2.0 / delta)))


def masa_loss_bound(stats: StatsGrid, p: PartitionWeights, delta: float) -> float:
    """High-probability upper bound on the expected squared Frobenius error."""
    if np.any(stats.n < 2):
        f = int(np.argmax(stats.n < 2))
        raise InsufficientSamplesError(f"partition {divmod(f, stats.K)} has fewer than 2 samples")
    log2d = math.log(2.0 / delta)
    pf = p.p.ravel()
    return float(sum(kernels.bound_term(pf[f], stats.score2[f], float(stats.n[f]), log2d)
                     for f in range(pf.size)))


def loss_bound_path(result, p: PartitionWeights, delta: float) -> np.ndarray:
    """The bound after every query of a finished run (NaN before it is defined)."""
    return kernels.bound_path(result.parts, result.snaps, p.p.ravel(), math.log(2.0 / delta))


def stopping_index(bounds: np.ndarray, epsilon: float):
    """Budget (query count) at which the bound first reaches ``epsilon**2``, or None."""
    hit = np.flatnonzero(bounds <= epsilon ** 2)
    return int(hit[0]) + 1 if hit.size else None


@dataclass
class SavingsReport:
    required_n: int | None
    flat_n: int
    ceiling: int
    delta: float

    @property
    def achieved(self) -> bool:
        return self.required_n is not None

    @property
    def savings(self) -> float | None:
        if self.required_n is None:
            return None
        return 1.0 - self.required_n / self.flat_n


def required_budget_masa(source, params: ConfidenceParams, *, ceiling=None, a=1.0, seed=0, weights=None):
    """Smallest budget at which the adaptive loss bound drops below ``epsilon**2``.

    ``source`` is a Scenario (simulated with ``seed``) or a finished adaptive
    RunResult together with its partition weights, passed as ``(result, p)``.
    The budget ceiling defaults to the flat requirement.
    """
    from .oracle import Scenario
    from .sampler import SamplerConfig, simulate

    flat = required_budget_flat(params)
    if isinstance(source, Scenario):
        ceiling = ceiling or flat
        L, K = source.L, source.K
        cfg = SamplerConfig(ceiling, a=a, seed=seed, strategy="masa", weights=weights)
        result, p = simulate(source, cfg), source.p
    else:
        result, p = source
        L, K = p.L, p.K
        ceiling = ceiling or result.n_queries
    delta = params.delta_for(L, K, ceiling)
    bounds = loss_bound_path(result, p, delta)
    return SavingsReport(stopping_index(bounds[:ceiling], params.epsilon), flat, ceiling, delta)
