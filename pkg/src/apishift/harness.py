"""Ingestion, seeded Monte Carlo experiments and report files.

File formats (one JSON record per line, UTF-8, labels 1-based):

    manifest.jsonl     {"id", "true_label", "difficulty"?, "confidence"?, "old_prediction"?, "payload"?}
    predictions.jsonl  {"id", "label"}
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._accel import backend
from .budget import ConfidenceParams, required_budget_flat, required_budget_masa
from .core import (ConfusionMatrix, ShiftMatrix, expected_loss_closed_form, optimal_loss,
                   shift_between, weighted_frobenius_sq)
from .errors import ConfigError, DataError, ShiftError
from .oracle import PartitionedDataset, Scenario, skewed_scenario
from .sampler import PRNG, STRATEGIES, SamplerConfig, lemma1_allocation, simulate, stratified_allocation

log = logging.getLogger(__name__)


def _read_jsonl(path) -> list:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        records.append(rec)
    if not records:
        raise DataError(f"{path} contains no records")
    return records


def _int_field(rec, key, lo, hi, where):
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise DataError(f"{where}: '{key}' must be an integer, got {v!r}")
    if hi is not None and not lo <= v <= hi:
        raise DataError(f"{where}: '{key}' = {v} outside {lo}..{hi}")
    if hi is None and v < lo:
        raise DataError(f"{where}: '{key}' = {v} below {lo}")
    return v


def bucket_difficulty(confidences, K: int) -> np.ndarray:
    """Quantile buckets, 0-based: the r-th smallest of n items gets ``floor(r K / n)``.

    Ties keep input order, so every level is nonempty when n >= K.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    n = conf.size
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if K > n:
        raise DataError(f"cannot split {n} items into {K} difficulty levels")
    if not np.all(np.isfinite(conf)):
        raise DataError("confidences must be finite")
    order = np.argsort(conf, kind="stable")
    levels = np.empty(n, dtype=np.int64)
    levels[order] = (np.arange(n) * K) // n
    return levels


@dataclass
class Ingested:
    dataset: PartitionedDataset
    C_old: ConfusionMatrix | None

    @property
    def p(self):
        return self.dataset.weights()


def ingest_manifest(path, L=None, K=None) -> Ingested:
    """Build partitions, masses and (when recorded) the old confusion matrix.

    Confidence-only manifests are bucketed into ``K`` levels within each true
    label, which keeps every partition nonempty.
    """
    records = _read_jsonl(path)
    ids, seen = [], set()
    for n, rec in enumerate(records, 1):
        rid = rec.get("id")
        if not isinstance(rid, str):
            raise DataError(f"{path}:{n}: 'id' must be a string")
        if rid in seen:
            raise DataError(f"{path}: duplicate id {rid!r}")
        seen.add(rid)
        ids.append(rid)
    truths = [_int_field(r, "true_label", 1, L, f"{path}:{n}") for n, r in enumerate(records, 1)]
    has_old = ["old_prediction" in r for r in records]
    if any(has_old) and not all(has_old):
        raise DataError(f"{path}: 'old_prediction' must be present on every record or none")
    olds = [_int_field(r, "old_prediction", 1, L, f"{path}:{n}") for n, r in enumerate(records, 1)] if all(has_old) else []
    L = L or max(truths + olds)
    if L < 2:
        raise DataError(f"{path}: need at least 2 labels")
    truths = np.array(truths, dtype=np.int64) - 1

    has_diff = ["difficulty" in r for r in records]
    has_conf = ["confidence" in r for r in records]
    if all(has_diff):
        diff = np.array([_int_field(r, "difficulty", 1, K, f"{path}:{n}") for n, r in enumerate(records, 1)]) - 1
        K = K or int(diff.max()) + 1
    elif any(has_diff):
        raise DataError(f"{path}: 'difficulty' must be present on every record or none")
    elif (K or 1) > 1:
        if not all(has_conf):
            raise DataError(f"{path}: K = {K} needs a 'difficulty' or 'confidence' on every record")
        conf = np.array([float(r["confidence"]) for r in records])
        diff = np.zeros(len(records), dtype=np.int64)
        for i in range(L):
            rows = np.flatnonzero(truths == i)
            if rows.size:
                diff[rows] = bucket_difficulty(conf[rows], K)
    else:
        K = 1
        diff = np.zeros(len(records), dtype=np.int64)

    payloads = {r["id"]: r["payload"] for r in records if "payload" in r}
    dataset = PartitionedDataset(ids, truths, diff, L, K, payloads)
    C_old = None
    if olds:
        tally = np.zeros((L, L))
        np.add.at(tally, (truths, np.array(olds) - 1), 1.0)
        C_old = ConfusionMatrix(tally / len(records))
    return Ingested(dataset, C_old)


def load_prediction_log(path, L: int) -> dict:
    """predictions.jsonl -> {item id: 0-based label}."""
    out = {}
    for n, rec in enumerate(_read_jsonl(path), 1):
        rid = rec.get("id")
        if not isinstance(rid, str):
            raise DataError(f"{path}:{n}: 'id' must be a string")
        if rid in out:
            raise DataError(f"{path}: duplicate id {rid!r}")
        out[rid] = _int_field(rec, "label", 1, L, f"{path}:{n}") - 1
    return out


def brute_force_shift(dataset: PartitionedDataset, log: dict, C_old: ConfusionMatrix) -> ShiftMatrix:
    """Shift computed from every recorded prediction at once."""
    tally = np.zeros((dataset.L, dataset.L))
    preds = np.array([log[i] for i in dataset.ids])
    np.add.at(tally, (dataset.true_labels, preds), 1.0)
    return shift_between(tally / len(dataset), C_old)


def derive_seed(master_seed: int, *keys) -> int:
    """Stable 64-bit seed for one cell of the experiment grid."""
    msg = ":".join(str(k) for k in (master_seed, *keys)).encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def closed_form_reference(strategy: str, scenario: Scenario, N: int, W=None) -> float:
    """Expected squared error of a strategy's allocation under the i.i.d. model.

    Adaptive runs are referenced against the optimal allocation.
    """
    p, sigma = scenario.p.p, scenario.weighted_sigma(W)
    if strategy == "uniform":
        return expected_loss_closed_form(N * p, p, sigma)
    if strategy == "stratified":
        alloc = stratified_allocation(scenario.p, N)
        if np.any((alloc.counts == 0) & (p * sigma > 0)):
            return math.nan
        return expected_loss_closed_form(alloc, p, sigma)
    if strategy == "oracle_optimal":
        return expected_loss_closed_form(lemma1_allocation(p, sigma, N), p, sigma)
    return optimal_loss(N, p, sigma)


@dataclass
class ExperimentConfig:
    scenarios: list
    strategies: list
    budgets: list
    trials: int = 100
    master_seed: int = 0
    a: float = 1.0
    weights: list | None = None
    workers: int = 1
    savings: dict | None = None
    trace: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if list(self.budgets) != sorted(self.budgets) or len(set(self.budgets)) != len(self.budgets):
            raise ConfigError("budgets must be strictly ascending")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")
        for sc in self.scenarios:
            for N in self.budgets:
                for s in self.strategies:
                    _check_budget(s, sc, N, self.weights)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        try:
            raw = d.get("scenarios") or [d.get("scenario")]
            scenarios = [_load_scenario(s, base_dir, n) for n, s in enumerate(raw)]
            return cls(
                scenarios=scenarios,
                strategies=list(d.get("strategies", ["masa", "uniform", "stratified", "oracle_optimal"])),
                budgets=[int(b) for b in d["budgets"]],
                trials=int(d.get("trials", 100)),
                master_seed=int(d.get("master_seed", 0)),
                a=float(d.get("a", 1.0)),
                weights=d.get("weights"),
                workers=int(d.get("workers", 1)),
                savings=d.get("savings"),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from exc
        except ShiftError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_spec() for s in self.scenarios],
            "strategies": list(self.strategies),
            "budgets": list(self.budgets),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "a": self.a,
            "weights": self.weights,
            "savings": self.savings,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_budget(strategy, sc, N, W):
    L, K = sc.L, sc.K
    if strategy == "masa" and N < 2 * L * K:
        raise ConfigError(f"budget {N} < 2*L*K = {2 * L * K} for adaptive sampling on {sc.name!r}")
    if strategy == "stratified" and N < L:
        raise ConfigError(f"budget {N} < L = {L} for stratified sampling on {sc.name!r}")
    if strategy == "oracle_optimal":
        need = int(np.count_nonzero(sc.p.p * sc.weighted_sigma(W) > 0))
        if N < need:
            raise ConfigError(f"budget {N} < {need} partitions with positive uncertainty on {sc.name!r}")


def _load_scenario(spec, base_dir, n) -> Scenario:
    if spec is None:
        raise ConfigError("config needs 'scenario' or 'scenarios'")
    if isinstance(spec, str):
        path = Path(base_dir) / spec
        try:
            spec = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load scenario {path}: {exc}") from exc
    if "builtin" in spec:
        if spec["builtin"] != "skewed":
            raise ConfigError(f"unknown builtin scenario {spec['builtin']!r}")
        kw = {k: spec[k] for k in ("L", "high_sigma", "low_sigma") if k in spec}
        return skewed_scenario(name=spec.get("name", "skewed"), **kw)
    spec = dict(spec)
    spec.setdefault("name", f"scenario{n}")
    return Scenario.from_spec(spec)


@dataclass
class CurvePoint:
    scenario: str
    strategy: str
    budget: int
    mean_sq_error: float
    stderr: float
    closed_form_ref: float
    mean_allocation: list
    trials_ok: int
    trials_aborted: int


@dataclass
class SavingsRow:
    scenario: str
    strategy: str
    required_n: float | None
    savings_vs_flat: float | None


@dataclass
class ExperimentReport:
    results: list = field(default_factory=list)
    references: list = field(default_factory=list)
    savings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    estimates: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def curve(self, strategy, scenario=None) -> list:
        return [r for r in self.results
                if r.strategy == strategy and (scenario is None or r.scenario == scenario)]

    def to_json(self) -> dict:
        return _clean({
            "results": [asdict(r) for r in self.results],
            "references": self.references,
            "savings": [asdict(s) for s in self.savings],
            "metadata": self.metadata,
        })


def _cell(scenario, strategy, budget, seeds, a, W, keep_trace):
    """All trials of one (strategy, budget) cell. Runs in a worker process."""
    true = scenario.true_shift()
    losses, allocs, aborted, traces, first = [], [], 0, [], None
    for trial, seed in enumerate(seeds):
        cfg = SamplerConfig(budget, a=a, seed=seed, strategy=strategy, weights=W)
        res = simulate(scenario, cfg)
        if trial == 0:
            first = res.shift_estimate.entries
        if keep_trace:
            traces.append((trial, seed, res.parts, res.labels, res.snaps))
        if res.aborted:
            aborted += 1
            continue
        losses.append(weighted_frobenius_sq(shift_between(res.shift_estimate, true), W))
        allocs.append(res.allocation.counts)
    return losses, allocs, aborted, traces, first


def _aggregate(losses):
    n = len(losses)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(losses) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2 for x in losses) / (n - 1)
    return mean, math.sqrt(var / n)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    W = None if config.weights is None else np.asarray(config.weights, dtype=np.float64)
    report = ExperimentReport()
    report.metadata = {
        "master_seed": config.master_seed,
        "prng": PRNG,
        "backend": backend(),
        "config_hash": config.hash(),
        "trials": config.trials,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    cells, seen = [], set()
    for sc in config.scenarios:
        for strategy in config.strategies:
            for N in config.budgets:
                seeds = [derive_seed(config.master_seed, sc.name, strategy, N, t) for t in range(config.trials)]
                seen.update(seeds)
                cells.append((sc, strategy, N, seeds))
    if len(seen) != config.trials * len(cells):
        raise ConfigError("derived seed collision in the experiment grid")

    args = [(sc, s, N, seeds, config.a, W, config.trace) for sc, s, N, seeds in cells]
    if config.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_cell, *zip(*args)))
    else:
        outputs = [_cell(*a) for a in args]

    total_aborted = 0
    for (sc, strategy, N, seeds), (losses, allocs, aborted, traces, first) in zip(cells, outputs):
        mean, se = _aggregate(losses)
        total_aborted += aborted
        mean_alloc = (np.sum(allocs, axis=0) / len(allocs)).tolist() if allocs else []
        report.results.append(CurvePoint(
            sc.name, strategy, N, mean, se, closed_form_reference(strategy, sc, N, W),
            mean_alloc, len(losses), aborted))
        report.estimates.append({"scenario": sc.name, "strategy": strategy, "budget": N,
                                 "trial": 0, "seed": seeds[0], "matrix": first})
        for trial, seed, parts, labels, snaps in traces:
            report.traces.append({"scenario": sc.name, "strategy": strategy, "budget": N, "trial": trial,
                                  "seed": seed, "K": sc.K, "parts": parts, "labels": labels, "snaps": snaps})
    for sc in config.scenarios:
        for N in config.budgets:
            report.references.append({
                "scenario": sc.name,
                "budget": N,
                "optimal": closed_form_reference("masa", sc, N, W),
                "uniform": closed_form_reference("uniform", sc, N, W),
            })
    report.metadata["aborted_runs"] = total_aborted
    if config.savings is not None:
        report.savings = savings_table(config, W)
    return report


def savings_table(config: ExperimentConfig, W=None) -> list:
    """Required sample size per strategy to reach the target error."""
    s = config.savings or {}
    params = ConfidenceParams(float(s.get("epsilon", 0.01)), float(s.get("alpha", 0.05)), s.get("delta"))
    trials = int(s.get("trials", min(config.trials, 20)))
    flat = required_budget_flat(params)
    rows = []
    for sc in config.scenarios:
        for strategy in config.strategies:
            if strategy in ("uniform", "stratified"):
                rows.append(SavingsRow(sc.name, strategy, flat, 0.0))
            elif strategy == "masa":
                reqs = []
                for t in range(trials):
                    seed = derive_seed(config.master_seed, sc.name, "savings", t)
                    rep = required_budget_masa(sc, params, ceiling=int(s.get("ceiling", flat)),
                                               a=config.a, seed=seed, weights=W)
                    reqs.append(rep.required_n)
                if any(r is None for r in reqs):
                    rows.append(SavingsRow(sc.name, strategy, None, None))
                else:
                    req = math.fsum(reqs) / len(reqs)
                    rows.append(SavingsRow(sc.name, strategy, req, 1.0 - req / flat))
    return rows


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def shift_estimate_record(matrix, **meta) -> dict:
    m = np.asarray(matrix, dtype=np.float64)
    L = m.shape[0]
    cells = [{"true_label": i + 1, "predicted_label": j + 1, "value": float(m[i, j])}
             for i in range(L) for j in range(L)]
    return {**meta, "L": L, "matrix": m.tolist(), "cells": cells}


def write_shift_estimates(path, records) -> None:
    doc = {"estimates": records}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_shift_estimates(path) -> list:
    """Read shift_estimate.json; each entry gains a ``shift`` ShiftMatrix."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        out = []
        for rec in doc["estimates"]:
            m = np.array(rec["matrix"], dtype=np.float64)
            for c in rec["cells"]:
                if m[c["true_label"] - 1, c["predicted_label"] - 1] != c["value"]:
                    raise DataError(f"{path}: cell {c} disagrees with matrix")
            out.append({**rec, "shift": ShiftMatrix(m)})
        return out
    except (OSError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed shift estimate file {path}: {exc}") from exc


def trace_records(run_meta: dict, parts, labels, snaps, K: int, item_ids=None):
    """Header line then one line per query; partitions and labels 1-based."""
    yield {"type": "run", **run_meta, "prng": PRNG}
    for t in range(len(parts)):
        i, k = divmod(int(parts[t]), K)
        yield {
            "type": "event",
            "iteration": t + 1,
            "partition": [i + 1, k + 1],
            "item_id": None if item_ids is None else item_ids[t],
            "predicted_label": int(labels[t]) + 1,
            "sigma2": float(snaps[t]),
        }


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def emit_reports(report: ExperimentReport, outdir) -> list:
    """Write curves.csv, savings.csv, summary.json, shift_estimate.json and trace.jsonl."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        multi = len({r.scenario for r in report.results}) > 1
        if report.results:
            path = outdir / "curves.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow((["scenario"] if multi else []) + ["strategy", "budget", "mean_sq_error", "stderr", "closed_form_ref"])
                for r in report.results:
                    w.writerow(([r.scenario] if multi else []) +
                               [r.strategy, r.budget, _fmt(r.mean_sq_error), _fmt(r.stderr), _fmt(r.closed_form_ref)])
            written.append(path)
        if report.savings:
            path = outdir / "savings.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow((["scenario"] if multi else []) + ["strategy", "required_n", "savings_vs_flat"])
                for s in report.savings:
                    w.writerow(([s.scenario] if multi else []) + [s.strategy, _fmt(s.required_n), _fmt(s.savings_vs_flat)])
            written.append(path)
        path = outdir / "summary.json"
        path.write_text(json.dumps(report.to_json(), indent=1, default=_json_default) + "\n", encoding="utf-8")
        written.append(path)
        if report.estimates:
            path = outdir / "shift_estimate.json"
            recs = [shift_estimate_record(e["matrix"], **{k: v for k, v in e.items() if k != "matrix"})
                    for e in report.estimates]
            write_shift_estimates(path, recs)
            written.append(path)
        if report.traces:
            path = outdir / "trace.jsonl"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                for tr in report.traces:
                    meta = {k: tr[k] for k in ("scenario", "strategy", "budget", "trial", "seed")}
                    for rec in trace_records(meta, tr["parts"], tr["labels"], tr["snaps"], tr["K"], tr.get("item_ids")):
                        fh.write(json.dumps(rec) + "\n")
            written.append(path)
    except OSError as exc:
        raise DataError(f"cannot write reports to {outdir}: {exc}") from exc
    log.info("wrote %s", ", ".join(os.fspath(p) for p in written))
    return written


def _clean(o):
    """NaN -> null, numpy scalars/arrays -> plain JSON types."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        return None if math.isnan(o) else float(o)
    if isinstance(o, np.integer):
        return int(o)
    return o


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


@dataclass
class Assessment:
    result: object
    summary: dict
    trace_meta: dict


def run_assessment(cfg: dict, base_dir=".", seed=None, session=None, sleep=None) -> Assessment:
    """One run over a real dataset, against a replay log or a live endpoint."""
    from .budget import masa_loss_bound
    from .oracle import EndpointConfig, HttpOracle, ReplayOracle
    from .sampler import run_masa, run_stratified, run_uniform

    base = Path(base_dir)
    try:
        manifest = base / cfg["manifest"]
        strategy = cfg.get("strategy", "masa")
        budget = cfg["budget"]
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    runners = {"masa": run_masa, "uniform": run_uniform, "stratified": run_stratified}
    if strategy not in runners:
        raise ConfigError(f"strategy {strategy!r} is not available for assessment; choose from {sorted(runners)}")
    ing = ingest_manifest(manifest, L=cfg.get("L"), K=cfg.get("K"))
    ds = ing.dataset
    if budget == "all":
        budget = len(ds)
    if "c_old" in cfg:
        C_old = ConfusionMatrix(np.asarray(cfg["c_old"], dtype=np.float64))
    elif ing.C_old is not None:
        C_old = ing.C_old
    else:
        raise ConfigError("no old confusion matrix: add 'old_prediction' to the manifest or 'c_old' to the config")
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    W = cfg.get("weights")
    scfg = SamplerConfig(int(budget), a=float(cfg.get("a", 1.0)), seed=seed, strategy=strategy,
                         weights=None if W is None else np.asarray(W, dtype=np.float64))
    if "predictions" in cfg:
        oracle = ReplayOracle(load_prediction_log(base / cfg["predictions"], ds.L))
    elif "endpoint" in cfg:
        kw = {"session": session} if session is not None else {}
        if sleep is not None:
            kw["sleep"] = sleep
        oracle = HttpOracle(EndpointConfig.from_dict(cfg["endpoint"]), ds.L, ds.payloads, **kw)
    else:
        raise ConfigError("config needs 'predictions' or 'endpoint'")
    p = ds.weights()
    res = runners[strategy](oracle, ds, p, C_old, scfg)
    summary = {
        "strategy": strategy,
        "budget": scfg.budget,
        "queries": oracle.queries,
        "aborted": res.aborted,
        "error": res.error,
        "exhausted_partitions": sorted([i + 1, k + 1] for i, k in res.exhausted_partitions),
        "fallback_partitions": sorted([i + 1, k + 1] for i, k in res.fallback_partitions),
        "allocation": res.allocation.counts.tolist(),
        "partition_sizes": ds.sizes().tolist(),
        "shift_estimate": res.shift_estimate.entries.tolist(),
        "seed": seed,
        "prng": PRNG,
        "backend": backend(),
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if strategy == "masa" and np.all(res.grid.n >= 2):
        params = ConfidenceParams(float(cfg.get("epsilon", 0.01)), float(cfg.get("alpha", 0.05)))
        delta = params.delta_for(ds.L, ds.K, scfg.budget)
        summary["loss_bound"] = masa_loss_bound(res.grid, p, delta)
        summary["loss_bound_delta"] = delta
    meta = {"strategy": strategy, "budget": scfg.budget, "trial": 0, "seed": seed}
    return Assessment(res, _clean(summary), meta)


def emit_assessment(a: Assessment, outdir, trace=False) -> list:
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        res = a.result
        written = [outdir / "summary.json", outdir / "shift_estimate.json"]
        written[0].write_text(json.dumps(a.summary, indent=1) + "\n", encoding="utf-8")
        rec = shift_estimate_record(res.shift_estimate.entries, strategy=res.strategy,
                                    budget=a.trace_meta["budget"], trial=0, seed=res.seed)
        write_shift_estimates(written[1], [rec])
        if trace:
            written.append(outdir / "trace.jsonl")
            write_jsonl(written[-1], trace_records(a.trace_meta, res.parts, res.labels, res.snaps, res.K, res.item_ids))
    except OSError as exc:
        raise DataError(f"cannot write reports to {outdir}: {exc}") from exc
    return written
