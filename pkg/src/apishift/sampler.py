"""Budget allocation strategies: adaptive UCB, uniform, stratified, oracle-optimal.

Every run consumes two random streams spawned from ``config.seed``: one for
the sampler's own choices (item order, uniform partition draws) and, for
simulated runs, one for the oracle. Generator: numpy PCG64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import Allocation, ConfusionMatrix, PartitionWeights, ShiftMatrix
from .errors import ConfigError, DegenerateScenarioError, OracleError
from .estimator import StatsGrid, flat_row_weights, fuse_shift
from .oracle import PartitionedDataset, PredictionOracle, Scenario, SimulatedOracle

PRNG = "numpy.PCG64"
STRATEGIES = ("masa", "uniform", "stratified", "oracle_optimal")


@dataclass
class SamplerConfig:
    budget: int
    a: float = 1.0
    seed: int = 0
    strategy: str = "masa"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if int(self.budget) != self.budget or self.budget < 1:
            raise ConfigError(f"budget must be a positive integer, got {self.budget}")
        if not self.a > 0 or not math.isfinite(self.a):
            raise ConfigError(f"exploration parameter a must be positive, got {self.a}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        self.budget = int(self.budget)

    def streams(self):
        """(sampler_rng, oracle_rng) for this seed."""
        sampler_ss, oracle_ss = np.random.SeedSequence(int(self.seed)).spawn(2)
        return np.random.Generator(np.random.PCG64(sampler_ss)), np.random.Generator(np.random.PCG64(oracle_ss))


@dataclass(frozen=True)
class TraceEvent:
    iteration: int
    partition: tuple
    item_id: object
    predicted_label: int
    sigma2_snapshot: float


@dataclass
class RunResult:
    shift_estimate: ShiftMatrix
    allocation: Allocation
    strategy: str
    seed: int
    parts: np.ndarray
    labels: np.ndarray
    snaps: np.ndarray
    L: int
    K: int
    item_ids: list | None = None
    exhausted_partitions: set = field(default_factory=set)
    fallback_partitions: set = field(default_factory=set)
    aborted: bool = False
    error: str | None = None
    grid: StatsGrid | None = None

    @property
    def n_queries(self) -> int:
        return int(self.parts.shape[0])

    @property
    def trace(self) -> list:
        K = self.K
        ids = self.item_ids if self.item_ids is not None else [None] * self.n_queries
        return [
            TraceEvent(t + 1, divmod(int(f), K), ids[t], int(lab), float(s))
            for t, (f, lab, s) in enumerate(zip(self.parts, self.labels, self.snaps))
        ]


def select_partition(stats: StatsGrid, p: PartitionWeights, a: float) -> tuple:
    f = kernels.ucb_select(stats.n, stats.score2, p.p.ravel(), float(a))
    return divmod(int(f), stats.K)


def _largest_remainder(real: np.ndarray, total: int, floor: np.ndarray) -> np.ndarray:
    """Round ``real`` to integers summing to ``total`` with per-entry minimum ``floor``.

    Ties go to the lowest flat index.
    """
    counts = np.maximum(np.floor(real).astype(np.int64), floor)
    rem = real - np.floor(real)
    deficit = total - int(counts.sum())
    if deficit > 0:
        order = np.lexsort((np.arange(real.size), -rem))
        counts[order[:deficit]] += 1
    while deficit < 0:
        # floors overshot: take from the entry furthest above its real share
        slack = np.where(counts > floor, counts - real, -np.inf)
        counts[int(np.argmax(slack))] -= 1
        deficit += 1
    return counts


def lemma1_allocation(p, sigma, N: int) -> Allocation:
    """Integer version of the allocation proportional to ``p * sigma``."""
    pa = p.p if isinstance(p, PartitionWeights) else np.asarray(p, dtype=np.float64)
    w = (pa * np.asarray(sigma, dtype=np.float64).reshape(pa.shape)).ravel()
    if not np.any(w > 0):
        raise DegenerateScenarioError("every partition has zero uncertainty; any allocation is optimal")
    positive = (w > 0).astype(np.int64)
    if N < positive.sum():
        raise ConfigError(f"budget {N} is smaller than the {positive.sum()} partitions needing a sample")
    # constrained optimum under n >= 1: pin entries whose share falls below
    # one sample, spread the rest proportionally, repeat until stable
    pinned = np.zeros(w.size, dtype=bool)
    while True:
        free = (w > 0) & ~pinned
        real = np.where(pinned, 1.0, 0.0)
        real[free] = (N - pinned.sum()) * w[free] / w[free].sum()
        low = free & (real < 1.0)
        if not low.any():
            break
        pinned |= low
    counts = _largest_remainder(real, N, positive)
    return Allocation(counts.reshape(pa.shape))


def stratified_allocation(p, N: int) -> Allocation:
    """Equal budget per true label, split across difficulty levels by mass."""
    pa = p.p if isinstance(p, PartitionWeights) else np.asarray(p, dtype=np.float64).reshape(-1, 1)
    L, K = pa.shape
    if N < L:
        raise ConfigError(f"stratified sampling needs budget >= L = {L}, got {N}")
    per_label = np.full(L, N // L, dtype=np.int64)
    per_label[: N % L] += 1
    out = np.zeros((L, K), dtype=np.int64)
    for i in range(L):
        row = pa[i]
        out[i] = _largest_remainder(per_label[i] * row / row.sum(), int(per_label[i]), np.zeros(K, dtype=np.int64))
    return Allocation(out)


def _prior(C_old: ConfusionMatrix, K: int) -> np.ndarray:
    return np.repeat(C_old.conditionals(), K, axis=0)


def _finish(grid, p, C_old, cfg, parts, labels, snaps, item_ids=None, exhausted=(), aborted=False, error=None):
    fallback = {divmod(int(f), grid.K) for f in np.flatnonzero(grid.n == 0)}
    estimate = fuse_shift(grid, p, C_old, prior=_prior(C_old, grid.K))
    return RunResult(
        shift_estimate=estimate,
        allocation=Allocation(grid.counts),
        strategy=cfg.strategy,
        seed=int(cfg.seed),
        parts=np.asarray(parts, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        snaps=np.asarray(snaps, dtype=np.float64),
        L=grid.L,
        K=grid.K,
        item_ids=item_ids,
        exhausted_partitions=set(exhausted),
        fallback_partitions=fallback,
        aborted=aborted,
        error=error,
        grid=grid,
    )


class _Pools:
    """Per-partition item queues, shuffled once, drawn without replacement."""

    def __init__(self, dataset: PartitionedDataset, rng):
        self.dataset = dataset
        self.queues = [rng.permutation(ix) for ix in dataset.index]
        self.pos = np.zeros(len(self.queues), dtype=np.int64)

    def next(self, f: int):
        q = self.queues[f]
        if self.pos[f] >= q.size:
            return None
        item = q[self.pos[f]]
        self.pos[f] += 1
        return self.dataset.ids[item]


def _generic_loop(oracle, pools, p, C_old, cfg, L, K, chooser):
    """Query-by-query loop shared by every strategy and oracle.

    ``chooser(grid, t)`` returns the flat partition for query ``t``, or a
    ``(flat, item_id)`` pair when the item is already fixed.
    """
    grid = StatsGrid(L, K, cfg.weights)
    parts, labels, snaps, ids = [], [], [], []
    exhausted, aborted, error = set(), False, None
    for t in range(cfg.budget):
        choice = chooser(grid, t)
        if isinstance(choice, tuple):
            f, item = choice
        else:
            f = choice
            item = pools.next(f) if pools is not None else None
            if pools is not None and item is None:
                exhausted.add(divmod(f, K))
                aborted, error = True, f"partition {divmod(f, K)} exhausted after {t} queries"
                break
        i, k = divmod(f, K)
        try:
            lab = oracle.predict((i, k), item)
        except OracleError as exc:
            aborted, error = True, f"{type(exc).__name__}: {exc}"
            break
        snaps.append(grid.observe(i, k, lab))
        parts.append(f)
        labels.append(lab)
        ids.append(item)
    has_items = any(item is not None for item in ids)
    return _finish(grid, p, C_old, cfg, parts, labels, snaps,
                   item_ids=ids if has_items else None,
                   exhausted=exhausted, aborted=aborted, error=error)


def _use_fast(oracle, dataset, fast):
    return fast and dataset is None and type(oracle) is SimulatedOracle


def _check_dims(p: PartitionWeights, C_old: ConfusionMatrix, dataset):
    if C_old.L != p.L:
        raise ConfigError(f"old confusion matrix is {C_old.L}x{C_old.L} but there are {p.L} labels")
    if dataset is not None and (dataset.L, dataset.K) != (p.L, p.K):
        raise ConfigError("dataset partitions do not match partition weights")


def run_masa(oracle: PredictionOracle, dataset, p: PartitionWeights, C_old: ConfusionMatrix,
             config: SamplerConfig, fast: bool = True) -> RunResult:
    """Adaptive allocation: two samples per partition, then UCB on weighted scores."""
    L, K = p.L, p.K
    _check_dims(p, C_old, dataset)
    if config.budget < 2 * L * K:
        raise ConfigError(f"adaptive sampling needs budget >= 2*L*K = {2 * L * K}, got {config.budget}")
    pf = p.p.ravel()
    a = float(config.a)
    if _use_fast(oracle, dataset, fast):
        wsq = flat_row_weights(config.weights, L, K)
        u = oracle.uniforms(config.budget)
        n, mu, s2, H, parts, labels, snaps = kernels.masa_loop(
            pf, oracle._cdf, u, a, wsq, config.weights is not None)
        grid = StatsGrid.from_arrays(L, K, n, mu, s2, H, config.weights)
        return _finish(grid, p, C_old, config, parts, labels, snaps)
    sampler_rng, _ = config.streams()
    pools = _Pools(dataset, sampler_rng) if dataset is not None else None

    def chooser(grid, t):
        return int(kernels.ucb_select(grid.n, grid.score2, pf, a))

    return _generic_loop(oracle, pools, p, C_old, config, L, K, chooser)


def _run_sequence(oracle, dataset, p, C_old, config, seq, fast):
    """Query partitions in the given flat order."""
    L, K = p.L, p.K
    if _use_fast(oracle, dataset, fast):
        wsq = flat_row_weights(config.weights, L, K)
        u = oracle.uniforms(seq.size)
        labels = kernels.draw_labels(seq, oracle._cdf, u)
        n, mu, s2, H, snaps = kernels.observe_sequence(seq, labels, L * K, L, wsq, config.weights is not None)
        grid = StatsGrid.from_arrays(L, K, n, mu, s2, H, config.weights)
        return _finish(grid, p, C_old, config, seq, labels, snaps)
    sampler_rng, _ = config.streams()
    pools = _Pools(dataset, sampler_rng) if dataset is not None else None
    return _generic_loop(oracle, pools, p, C_old, config, L, K, lambda grid, t: int(seq[t]))


def _block_order(alloc: Allocation) -> np.ndarray:
    c = alloc.counts.ravel()
    return np.repeat(np.arange(c.size, dtype=np.int64), c)


def run_uniform(oracle, dataset, p, C_old, config: SamplerConfig, fast: bool = True) -> RunResult:
    """Simple random sampling from the whole population.

    Simulated oracles draw the partition of each query with probability p;
    finite datasets are visited in one random permutation, so a budget equal
    to the dataset size touches every item once.
    """
    _check_dims(p, C_old, dataset)
    sampler_rng, _ = config.streams()
    if dataset is None:
        cum = np.cumsum(p.p.ravel())
        seq = np.minimum(np.searchsorted(cum, sampler_rng.random(config.budget), side="right"), cum.size - 1)
        return _run_sequence(oracle, None, p, C_old, config, seq.astype(np.int64), fast)
    order = sampler_rng.permutation(len(dataset))
    flat = dataset.true_labels * dataset.K + dataset.difficulty
    n_avail = len(dataset)

    def chooser(grid, t):
        item = order[t]
        return int(flat[item]), dataset.ids[item]

    L, K = p.L, p.K
    if config.budget > n_avail:
        # every item gets queried, then the run stops short of its budget
        short = SamplerConfig(n_avail, config.a, config.seed, config.strategy, config.weights)
        res = _generic_loop(oracle, None, p, C_old, short, L, K, chooser)
        res.strategy = config.strategy
        if not res.aborted:
            res.aborted = True
            res.error = f"dataset exhausted after {n_avail} queries"
            res.exhausted_partitions = {divmod(f, K) for f in range(L * K)}
        return res
    return _generic_loop(oracle, None, p, C_old, config, L, K, chooser)


def run_stratified(oracle, dataset, p, C_old, config: SamplerConfig, fast: bool = True) -> RunResult:
    _check_dims(p, C_old, dataset)
    seq = _block_order(stratified_allocation(p, config.budget))
    return _run_sequence(oracle, dataset, p, C_old, config, seq, fast)


def run_oracle_optimal(oracle, dataset, truth, C_old, config: SamplerConfig, fast: bool = True) -> RunResult:
    """Fixed allocation proportional to ``p * sigma`` using the true scores.

    ``truth`` is a Scenario, or a ``(p, sigma)`` pair.
    """
    if isinstance(truth, Scenario):
        p, sigma = truth.p, truth.weighted_sigma(config.weights)
    else:
        p, sigma = truth
    _check_dims(p, C_old, dataset)
    seq = _block_order(lemma1_allocation(p, sigma, config.budget))
    return _run_sequence(oracle, dataset, p, C_old, config, seq, fast)


def simulate(scenario: Scenario, config: SamplerConfig, fast: bool = True) -> RunResult:
    """One run of ``config.strategy`` against a simulated oracle."""
    _, oracle_rng = config.streams()
    oracle = SimulatedOracle(scenario, oracle_rng)
    s = config.strategy
    if s == "masa":
        return run_masa(oracle, None, scenario.p, scenario.C_old, config, fast)
    if s == "uniform":
        return run_uniform(oracle, None, scenario.p, scenario.C_old, config, fast)
    if s == "stratified":
        return run_stratified(oracle, None, scenario.p, scenario.C_old, config, fast)
    return run_oracle_optimal(oracle, None, scenario, scenario.C_old, config, fast)


def guarantee_threshold(L: int, K: int, N: int) -> float:
    """Smallest exploration parameter covered by the asymptotic gap guarantee."""
    return 2 * math.log(L) + math.log(K) + 2.25 * math.log(N)
