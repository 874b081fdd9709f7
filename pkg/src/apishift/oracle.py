"""Prediction sources: simulated scenarios, recorded logs, and a JSON endpoint."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .core import ConfusionMatrix, Dimensions, LabelDistribution, PartitionWeights, shift_between
from .errors import ConstructionError, DataError, LookupOracleError, ProtocolError, QueryError
from .estimator import score_from_distribution
from . import kernels


@dataclass(frozen=True, eq=False)
class Scenario:
    """Ground truth: partition masses, new-model conditionals and the old matrix.

    ``mu[i, k]`` is the predicted-label distribution of the new model on
    partition ``(i, k)``.
    """

    p: PartitionWeights
    mu: np.ndarray
    C_old: ConfusionMatrix
    name: str = "scenario"

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        L, K = self.p.p.shape
        if mu.shape != (L, K, L):
            raise ConstructionError(f"mu must have shape {(L, K, L)}, got {mu.shape}")
        for i in range(L):
            for k in range(K):
                LabelDistribution(mu[i, k])
        if self.C_old.L != L:
            raise ConstructionError(f"old confusion matrix is {self.C_old.L}x{self.C_old.L}, expected {L}x{L}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        ConfusionMatrix(self._confusion())

    @property
    def dims(self) -> Dimensions:
        return self.p.dims

    @property
    def L(self) -> int:
        return self.p.L

    @property
    def K(self) -> int:
        return self.p.K

    def _confusion(self) -> np.ndarray:
        return np.einsum("ik,ikj->ij", self.p.p, self.mu)

    def true_confusion(self) -> ConfusionMatrix:
        return ConfusionMatrix(self._confusion())

    def true_shift(self):
        return shift_between(self.true_confusion(), self.C_old)

    def sigma2(self) -> np.ndarray:
        return np.array([[score_from_distribution(self.mu[i, k]) for k in range(self.K)] for i in range(self.L)])

    def sigma(self) -> np.ndarray:
        return np.sqrt(np.clip(self.sigma2(), 0.0, None))

    def weighted_sigma(self, W=None) -> np.ndarray:
        """Per-partition ``sqrt(sum_j W_ij^2 mu_j (1 - mu_j))``."""
        if W is None:
            return self.sigma()
        W = np.asarray(W, dtype=np.float64)
        var = self.mu * (1.0 - self.mu)
        return np.sqrt(np.einsum("ij,ikj->ik", W * W, var))

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.mu.reshape(self.L * self.K, self.L), axis=1)
        c[:, -1] = 1.0
        return c

    def to_spec(self) -> dict:
        return {
            "name": self.name,
            "L": self.L,
            "K": self.K,
            "p": self.p.p.tolist(),
            "mu": self.mu.tolist(),
            "c_old": self.C_old.entries.tolist(),
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "Scenario":
        try:
            L, K = int(spec["L"]), int(spec["K"])
            Dimensions(L, K)
            p = PartitionWeights(np.asarray(spec["p"], dtype=np.float64).reshape(L, K))
            mu = np.asarray(spec["mu"], dtype=np.float64).reshape(L, K, L)
            if "c_old" in spec:
                c_old = np.asarray(spec["c_old"], dtype=np.float64)
            elif "mu_old" in spec:
                mu_old = np.asarray(spec["mu_old"], dtype=np.float64).reshape(L, K, L)
                c_old = np.einsum("ik,ikj->ij", p.p, mu_old)
            else:
                raise ConstructionError("scenario needs either 'c_old' or 'mu_old'")
        except (KeyError, TypeError) as exc:
            raise ConstructionError(f"malformed scenario spec: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConstructionError):
                raise
            raise ConstructionError(f"malformed scenario spec: {exc}") from exc
        return cls(p, mu, ConfusionMatrix(c_old), name=str(spec.get("name", "scenario")))


def scenario_true_confusion(s: Scenario) -> ConfusionMatrix:
    return s.true_confusion()


def skewed_scenario(L=10, high_sigma=0.9, low_sigma=0.01, name="skewed") -> Scenario:
    """One hard partition among ``L`` easy ones, equal masses, K = 1.

    The hard partition puts mass ``q`` on its own label and spreads the rest
    evenly, with ``q`` chosen so that its score is exactly ``high_sigma**2``.
    The easy partitions leak a tiny mass to the next label.
    """
    s2 = high_sigma ** 2
    # q^2 + (1-q)^2/(L-1) = 1 - s2
    A, B, C = L / (L - 1.0), -2.0 / (L - 1.0), 1.0 / (L - 1.0) - (1.0 - s2)
    q = (-B + math.sqrt(B * B - 4 * A * C)) / (2 * A)
    e = (1.0 - math.sqrt(1.0 - 2.0 * low_sigma ** 2)) / 2.0
    mu = np.zeros((L, 1, L))
    mu[0, 0, :] = (1.0 - q) / (L - 1)
    mu[0, 0, 0] = q
    for i in range(1, L):
        mu[i, 0, i] = 1.0 - e
        mu[i, 0, (i + 1) % L] = e
    p = np.full((L, 1), 1.0 / L)
    mu_old = np.full((L, L), 0.05 / (L - 1))
    np.fill_diagonal(mu_old, 0.95)
    c_old = mu_old * p
    return Scenario(PartitionWeights(p), mu, ConfusionMatrix(c_old), name=name)


def random_scenario(L, K, rng, concentration=1.0, name="random") -> Scenario:
    p = rng.dirichlet(np.full(L * K, 2.0)).reshape(L, K)
    p = p / p.sum()
    mu = rng.dirichlet(np.full(L, concentration), size=(L, K))
    mu_old = rng.dirichlet(np.full(L, concentration), size=L)
    c_old = mu_old * p.sum(axis=1, keepdims=True)
    return Scenario(PartitionWeights(p), mu, ConfusionMatrix(c_old / c_old.sum()), name=name)


@dataclass
class PartitionedDataset:
    """Items grouped by (true label, difficulty); labels are 0-based."""

    ids: list
    true_labels: np.ndarray
    difficulty: np.ndarray
    L: int
    K: int
    payloads: dict = field(default_factory=dict)

    def __post_init__(self):
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        self.difficulty = np.asarray(self.difficulty, dtype=np.int64)
        if len(set(self.ids)) != len(self.ids):
            raise DataError("item ids are not unique")
        if self.true_labels.shape != (len(self.ids),) or self.difficulty.shape != (len(self.ids),):
            raise DataError("ids, labels and difficulty levels must have equal length")
        if len(self.ids) == 0:
            raise DataError("dataset is empty")
        if self.true_labels.min() < 0 or self.true_labels.max() >= self.L:
            raise DataError(f"true labels must lie in 1..{self.L}")
        if self.difficulty.min() < 0 or self.difficulty.max() >= self.K:
            raise DataError(f"difficulty levels must lie in 1..{self.K}")
        flat = self.true_labels * self.K + self.difficulty
        order = np.argsort(flat, kind="stable")
        bounds = np.searchsorted(flat[order], np.arange(self.L * self.K + 1))
        self.index = [order[bounds[f]:bounds[f + 1]] for f in range(self.L * self.K)]

    def __len__(self):
        return len(self.ids)

    def sizes(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.index], dtype=np.int64).reshape(self.L, self.K)

    def weights(self) -> PartitionWeights:
        sizes = self.sizes()
        if np.any(sizes == 0):
            i, k = (int(v) for v in np.argwhere(sizes == 0)[0])
            raise DataError(f"partition (label {i + 1}, difficulty {k + 1}) is empty")
        return PartitionWeights.from_counts(sizes)


class PredictionOracle:
    """Source of predicted labels. Subclasses implement ``_predict``."""

    with_replacement = False

    def __init__(self):
        self.queries = 0

    def predict(self, partition, item_id=None) -> int:
        label = self._predict(partition, item_id)
        self.queries += 1
        return label

    def _predict(self, partition, item_id):
        raise NotImplementedError


class SimulatedOracle(PredictionOracle):
    """Draws labels from the scenario's per-partition distributions."""

    with_replacement = True

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        super().__init__()
        self.scenario = scenario
        self.rng = rng
        self._cdf = scenario.cdf()

    def _predict(self, partition, item_id=None):
        i, k = partition
        return int(kernels.sample_label(self._cdf, i * self.scenario.K + k, self.rng.random()))

    def uniforms(self, n: int) -> np.ndarray:
        """Reserve ``n`` draws in bulk, counting them as queries."""
        u = self.rng.random(n)
        self.queries += n
        return u


def simulated_predict(s: Scenario, partition, rng) -> int:
    i, k = partition
    return int(kernels.sample_label(s.cdf(), i * s.K + k, rng.random()))


class ReplayOracle(PredictionOracle):
    """Replays recorded predictions keyed by item id (labels 0-based)."""

    def __init__(self, log: dict):
        super().__init__()
        self.log = log

    def _predict(self, partition, item_id):
        try:
            return self.log[item_id]
        except KeyError:
            raise LookupOracleError(f"no recorded prediction for item {item_id!r}") from None


def replay_predict(log: dict, item_id) -> int:
    try:
        return log[item_id]
    except KeyError:
        raise LookupOracleError(f"no recorded prediction for item {item_id!r}") from None


@dataclass
class EndpointConfig:
    url: str
    timeout: float = 10.0
    attempts: int = 3
    backoff: float = 0.5
    token: str | None = None
    delay: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = {k: d[k] for k in ("url", "timeout", "attempts", "backoff", "token", "delay") if k in d}
        return cls(**known)


class HttpOracle(PredictionOracle):
    """Blocking JSON client: POST {"id", "payload"}, expect {"label": 1..L}."""

    def __init__(self, config: EndpointConfig, L: int, payloads=None, session=None, sleep=time.sleep):
        super().__init__()
        self.config = config
        self.L = L
        self.payloads = payloads or {}
        self.session = session or requests.Session()
        self.sleep = sleep
        self.http_calls = 0
        if config.token:
            self.session.headers["Authorization"] = f"Bearer {config.token}"

    def _predict(self, partition, item_id):
        body = {"id": str(item_id), "payload": self.payloads.get(item_id)}
        cfg = self.config
        if cfg.delay > 0 and self.queries > 0:
            self.sleep(cfg.delay)
        last = None
        for attempt in range(cfg.attempts):
            if attempt:
                self.sleep(cfg.backoff * 2 ** (attempt - 1))
            self.http_calls += 1
            try:
                resp = self.session.post(cfg.url, json=body, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code != 200:
                last = f"HTTP {resp.status_code}"
                continue
            return self._parse(resp)
        raise QueryError(f"query for item {item_id!r} failed after {cfg.attempts} attempts ({last})")

    def _parse(self, resp) -> int:
        try:
            label = resp.json()["label"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"response is not {{'label': int}}: {resp.text[:200]!r}") from exc
        if isinstance(label, bool) or not isinstance(label, int):
            raise ProtocolError(f"label must be an integer, got {label!r}")
        if not 1 <= label <= self.L:
            raise ProtocolError(f"label {label} outside 1..{self.L}")
        return label - 1


def http_predict(config: EndpointConfig, item_id, payload, L: int, **kwargs) -> int:
    oracle = HttpOracle(config, L, payloads={item_id: payload}, **kwargs)
    return oracle.predict(None, item_id)
