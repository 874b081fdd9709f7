"""Command line entry point.

Exit codes: 0 success, 1 config error, 2 data error, 3 oracle/network error,
4 partial result (aborted runs present).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, ShiftError
from . import harness

EXIT_PARTIAL = 4


def _load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg, path.parent


def cmd_simulate(args) -> int:
    raw, base = _load_config(args.config)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    cfg = harness.ExperimentConfig.from_dict(raw, base)
    cfg.trace = args.trace
    report = harness.run_experiment(cfg)
    harness.emit_reports(report, args.out)
    for r in report.results:
        print(f"{r.scenario}\t{r.strategy}\tN={r.budget}\tmean={r.mean_sq_error:.4e}\tref={r.closed_form_ref:.4e}")
    return EXIT_PARTIAL if report.metadata.get("aborted_runs") else 0


def cmd_assess(args) -> int:
    raw, base = _load_config(args.config)
    result = harness.run_assessment(raw, base, seed=args.seed)
    harness.emit_assessment(result, args.out, trace=args.trace)
    s = result.summary
    print(f"{s['strategy']}: {s['queries']} queries, aborted={s['aborted']}")
    if s["aborted"]:
        print(f"run stopped early: {s['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return 0


def cmd_budget(args) -> int:
    raw, base = _load_config(args.config)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    raw.setdefault("budgets", [])
    raw.setdefault("strategies", ["masa", "uniform"])
    raw.setdefault("savings", {k: raw[k] for k in ("epsilon", "alpha", "delta", "ceiling") if k in raw})
    if "trials" in raw:
        raw["savings"].setdefault("trials", raw["trials"])
    cfg = harness.ExperimentConfig.from_dict(raw, base)
    report = harness.ExperimentReport(metadata={"master_seed": cfg.master_seed, "config_hash": cfg.hash()})
    report.savings = harness.savings_table(cfg, cfg.weights)
    harness.emit_reports(report, args.out)
    for s in report.savings:
        print(f"{s.scenario}\t{s.strategy}\trequired_n={s.required_n}\tsavings={s.savings_vs_flat}")
    return EXIT_PARTIAL if any(s.required_n is None for s in report.savings) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apishift", description="Estimate confusion-matrix shifts under a query budget.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (
        ("simulate", cmd_simulate, "Monte Carlo error-vs-budget curves on synthetic scenarios"),
        ("assess", cmd_assess, "estimate the shift on a dataset via a replay log or an endpoint"),
        ("budget", cmd_budget, "required sample size to reach a target error"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--trace", action="store_true", help="write trace.jsonl with every query")
        if name == "simulate":
            p.add_argument("--workers", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ShiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
