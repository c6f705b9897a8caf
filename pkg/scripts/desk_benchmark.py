"""Desk-scale comparison of EDCA against random search on identical splits.

Runs both searchers on the synthetic benchmark dataset (600 rows, informative
and noise numerics, categorical, binary and identifier columns), writes each
searcher's reports under --out, and prints a side-by-side table of test MCC,
data usage and evaluation counts.

    python3 scripts/desk_benchmark.py --runs 5 --folds 3 --max-evals 300
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from edca.dataset import SyntheticSpec
from edca.evolution import GAConfig
from edca.harness import RunConfig, run_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--max-evals", type=int, default=300)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-sep", type=float, default=2.0)
    p.add_argument("--retrain-all", action="store_true")
    p.add_argument("--out", default="results/desk")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    spec = SyntheticSpec(n_rows=600, n_numerical=6, n_noise=4, n_categorical=3, n_binary=1,
                         with_identifier=True, missing_rate=0.05, n_classes=3,
                         class_sep=args.class_sep)
    rows = []
    for searcher in ("edca", "random"):
        t0 = time.perf_counter()
        cfg = RunConfig(synthetic=spec, n_runs=args.runs, outer_cv_k=args.folds, searcher=searcher,
                        seed=args.seed, retrain_all=args.retrain_all,
                        output_dir=str(Path(args.out) / searcher),
                        ga=GAConfig(max_evaluations=args.max_evals, parallel_jobs=args.workers,
                                    time_budget_seconds=None))
        report = run_experiment(cfg)
        ok = report.ok_records
        mcc = np.array([r.test_mcc for r in ok])
        data = np.array([r.pct_data for r in ok])
        rows.append((searcher, np.median(mcc), mcc.mean(), mcc.std(), np.median(data),
                     np.mean([r.pipelines_fitted for r in ok]), time.perf_counter() - t0))

    print(f"\n{'searcher':8} {'median MCC':>10} {'mean MCC':>9} {'std':>7} "
          f"{'med %data':>9} {'fits':>6} {'seconds':>8}")
    for name, med, mean, std, pct, fits, secs in rows:
        print(f"{name:8} {med:10.4f} {mean:9.4f} {std:7.4f} {pct:9.3f} {fits:6.0f} {secs:8.1f}")


if __name__ == "__main__":
    main()
