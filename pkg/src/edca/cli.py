"""Command-line entry point: ``edca {analyze,search,evaluate,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .analyzer import BlueprintError, SearchSpaceConfig, analyze
from .dataset import DataError, SyntheticSpec, generate_synthetic, load_csv, write_csv
from .harness import RunConfig, run_experiment
from .metrics import accuracy, mcc_score
from .pipeline import FittedPipeline, SchemaError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SEARCH = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return doc


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then EDCA_WORKERS, then command-line flags (last one wins)."""
    doc = _read_json(args.config)
    if doc.get("data") is not None:
        # data paths are relative to the config file
        doc["data"] = str((Path(args.config).parent / doc["data"]).resolve())
    ga = dict(doc.get("ga", {}))
    if os.environ.get("EDCA_WORKERS"):
        try:
            ga["parallel_jobs"] = int(os.environ["EDCA_WORKERS"])
        except ValueError:
            raise ConfigError("EDCA_WORKERS must be an integer") from None
    for flag, key in (("max_evals", "max_evaluations"), ("workers", "parallel_jobs"),
                      ("time_budget", "time_budget_seconds")):
        if getattr(args, flag) is not None:
            ga[key] = getattr(args, flag)
    doc["ga"] = ga
    for flag, key in (("seed", "seed"), ("searcher", "searcher"), ("runs", "n_runs"),
                      ("folds", "outer_cv_k"), ("out", "output_dir"),
                      ("retrain_all_mode", "retrain_all_mode")):
        if getattr(args, flag) is not None:
            doc[key] = getattr(args, flag)
    if args.retrain_all:
        doc["retrain_all"] = True
    doc.setdefault("output_dir", "results")
    try:
        return RunConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_analyze(args) -> int:
    space = None
    if args.space:
        try:
            space = SearchSpaceConfig.from_dict(_read_json(args.space))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    ds = load_csv(args.data, args.target)
    bp = analyze(ds, space)
    print(json.dumps(bp.to_dict(), indent=1))
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = build_run_config(args)
    report = run_experiment(cfg)
    agg = report.aggregates()
    print(f"{len(report.ok_records)}/{len(report.records)} cells completed; "
          f"reports in {cfg.output_dir}")
    if "test_mcc" in agg:
        print(f"test MCC {agg['test_mcc']['mean']:.4f} ± {agg['test_mcc']['std']:.4f}, "
              f"data used {agg['pct_data']['mean']:.4f}")
    return EXIT_OK if report.ok_records else EXIT_SEARCH


def cmd_evaluate(args) -> int:
    doc = _read_json(args.pipeline)
    try:
        fp = FittedPipeline.from_dict(doc.get("pipeline", doc))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.pipeline} is not a fitted pipeline: {exc}") from exc
    ds = load_csv(args.data, fp.target_name)
    try:
        pred = fp.predict(ds)
    except KeyError as exc:
        raise DataError(f"data lacks a pipeline column: {exc}") from exc
    # align label indices by name: the file may hold a different label set
    names = list(fp.label_names)
    names += [n for n in ds.label_names if n not in names]
    index = {n: i for i, n in enumerate(names)}
    y = [index[ds.label_names[t]] for t in ds.target]
    print(json.dumps({"rows": ds.n_rows, "mcc": mcc_score(y, pred, len(names)),
                      "accuracy": accuracy(y, pred)}, indent=1))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec.from_dict(_read_json(args.spec))
    ds = generate_synthetic(spec, seed=args.seed)
    write_csv(ds, args.out)
    print(f"wrote {ds.n_rows} rows x {len(ds.columns)} features to {args.out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edca", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="print the blueprint inferred for a CSV file")
    a.add_argument("--data", required=True)
    a.add_argument("--target", required=True)
    a.add_argument("--space", help="search-space JSON overriding the default options")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("search", help="run an experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-evals", type=int)
    s.add_argument("--time-budget", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--searcher", choices=["edca", "random"])
    s.add_argument("--runs", type=int)
    s.add_argument("--folds", type=int)
    s.add_argument("--out")
    s.add_argument("--retrain-all", action="store_true")
    s.add_argument("--retrain-all-mode", choices=["instances", "both"])
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("evaluate", help="score a saved pipeline on a labelled CSV file")
    e.add_argument("--pipeline", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_evaluate)

    y = sub.add_parser("synth", help="write a synthetic dataset to CSV")
    y.add_argument("--spec", required=True)
    y.add_argument("--out", required=True)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError, BlueprintError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
