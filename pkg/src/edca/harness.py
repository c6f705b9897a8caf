"""Experiment orchestration: repeated outer cross-validation around a searcher."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analyzer import Blueprint, SearchSpaceConfig, analyze
from .dataset import Dataset, SyntheticSpec, generate_synthetic, kfold, load_csv, split_holdout
from .evolution import GAConfig, SearchError, SearchResult, evolve, random_search
from .metrics import DRMode, UsageReport, data_usage, dr_mode, mcc_score
from .pipeline import FittedPipeline, Genome, PipelineFailure, fit_pipeline
from .seeds import derive_seed
from .space import StepId

log = logging.getLogger(__name__)

REPORT_FORMAT = "edca.report/1"
SEARCHERS = {"edca": evolve, "random": random_search}
RETRAIN_MODES = ("instances", "both")

# seed streams derived from (seed, run[, fold], stream)
_DATA, _OUTER, _INNER, _SEARCH = 0, 1, 2, 3


@dataclass
class RunConfig:
    data: str | None = None
    target: str | None = None
    synthetic: SyntheticSpec | None = None
    ga: GAConfig = field(default_factory=GAConfig)
    search_space: SearchSpaceConfig = field(default_factory=SearchSpaceConfig)
    outer_cv_k: int = 5
    holdout_test_fraction: float = 0.25
    n_runs: int = 30
    val_fraction: float = 0.25
    searcher: str = "edca"
    retrain_all: bool = False
    retrain_all_mode: str = "instances"
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("give exactly one of 'data' and 'synthetic'")
        if self.data is not None and not self.target:
            raise ValueError("'target' is required with 'data'")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.outer_cv_k < 1:
            raise ValueError("outer_cv_k must be >= 2, or 1 for a single holdout split")
        if not 0.0 < self.val_fraction < 1.0 or not 0.0 < self.holdout_test_fraction < 1.0:
            raise ValueError("split fractions must lie in (0, 1)")
        if self.searcher not in SEARCHERS:
            raise ValueError(f"searcher must be one of {sorted(SEARCHERS)}")
        if self.retrain_all_mode not in RETRAIN_MODES:
            raise ValueError(f"retrain_all_mode must be one of {RETRAIN_MODES}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("synthetic"), dict):
            d["synthetic"] = SyntheticSpec.from_dict(d["synthetic"])
        d["ga"] = GAConfig.from_dict(d.get("ga", {}))
        d["search_space"] = SearchSpaceConfig.from_dict(d.get("search_space", {}))
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "data": self.data, "target": self.target,
            "synthetic": None if self.synthetic is None else self.synthetic.to_dict(),
            "ga": self.ga.to_dict(), "search_space": self.search_space.to_dict(),
            "outer_cv_k": self.outer_cv_k, "holdout_test_fraction": self.holdout_test_fraction,
            "n_runs": self.n_runs, "val_fraction": self.val_fraction, "searcher": self.searcher,
            "retrain_all": self.retrain_all, "retrain_all_mode": self.retrain_all_mode,
            "output_dir": self.output_dir, "seed": self.seed,
        }


@dataclass
class CellRecord:
    """Outcome of one (run, fold) cell."""

    run: int
    fold: int
    status: str = "ok"
    error: str | None = None
    test_mcc: float | None = None
    fitness: float | None = None
    pct_instances: float | None = None
    pct_features: float | None = None
    pct_data: float | None = None
    dr_mode: str | None = None
    total_evaluations: int = 0
    pipelines_fitted: int = 0
    restarts: int = 0
    generations: int = 0
    failures: int = 0
    test_mcc_all: float | None = None
    pct_instances_all: float | None = None
    pct_features_all: float | None = None
    pct_data_all: float | None = None
    retrain_error: str | None = None
    wall_time: float = 0.0
    history: list[dict] = field(default_factory=list)
    pipeline: dict | None = None
    pipeline_all: dict | None = None

    # wall time varies between identical runs; it goes to timings.csv instead
    def to_dict(self) -> dict:
        d = asdict(self)
        del d["wall_time"]
        return d


AGGREGATE_COLUMNS = ("test_mcc", "fitness", "pct_instances", "pct_features", "pct_data",
                     "total_evaluations", "pipelines_fitted", "restarts",
                     "test_mcc_all", "pct_instances_all", "pct_features_all", "pct_data_all")


@dataclass
class RunReport:
    config: RunConfig
    records: list[CellRecord]
    version: str

    @property
    def ok_records(self) -> list[CellRecord]:
        return [r for r in self.records if r.status == "ok"]

    def aggregates(self) -> dict[str, dict]:
        """Mean and population standard deviation of each column over successful cells."""
        out = {}
        for col in AGGREGATE_COLUMNS:
            vals = [getattr(r, col) for r in self.ok_records if getattr(r, col) is not None]
            if vals:
                a = np.asarray(vals, dtype=np.float64)
                out[col] = {"mean": float(a.mean()), "std": float(a.std()), "n": len(vals)}
        return out

    def dr_histogram(self) -> dict[str, int]:
        counts = {m.value: 0 for m in DRMode}
        for r in self.ok_records:
            counts[r.dr_mode] += 1
        return counts

    def to_dict(self) -> dict:
        cfg = self.config.to_dict()
        del cfg["output_dir"]
        return {
            "format": REPORT_FORMAT,
            "environment": {"version": self.version, "seed": self.config.seed, "config": cfg},
            "records": [r.to_dict() for r in self.records],
            "aggregates": self.aggregates(),
            "dr_histogram": self.dr_histogram(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# running


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, seed=derive_seed(cfg.seed, _DATA))
    return load_csv(cfg.data, cfg.target)


def outer_splits(ds: Dataset, cfg: RunConfig, run: int):
    seed = derive_seed(cfg.seed, run, _OUTER)
    if cfg.outer_cv_k == 1:
        return [split_holdout(ds, cfg.holdout_test_fraction, seed=seed)]
    return kfold(ds, cfg.outer_cv_k, seed=seed)


def retrain_all(best: Genome, blueprint: Blueprint, full_train: Dataset,
                mode: str = "instances", seed: int = 0) -> FittedPipeline:
    """Refit the best genome on every outer-training row.

    The instance gene is dropped; the feature gene is kept unless ``mode`` is
    ``"both"``. Hyperparameters are unchanged.
    """
    genome = best.replace_slot("is", None)
    if mode == "both":
        genome = genome.replace_slot("fs", None)
    fp = fit_pipeline(genome, blueprint, full_train, seed=seed)
    fp.max_instances = full_train.n_rows
    return fp


def _usage(genome: Genome, bp: Blueprint, outer_rows: int) -> UsageReport:
    return data_usage(genome, bp.max_instances, bp.max_features, reference_instances=outer_rows)


def run_cell(ds: Dataset, cfg: RunConfig, run: int, fold: int,
             outer_train_idx: np.ndarray, test_idx: np.ndarray) -> CellRecord:
    rec = CellRecord(run, fold)
    outer_train, test = ds.take(outer_train_idx), ds.take(test_idx)
    inner = split_holdout(outer_train, cfg.val_fraction, seed=derive_seed(cfg.seed, run, fold, _INNER))
    train, val = outer_train.take(inner.train_indices), outer_train.take(inner.val_indices)
    bp = analyze(train, cfg.search_space)
    ga = dataclasses.replace(cfg.ga, seed=derive_seed(cfg.seed, run, fold, _SEARCH))
    try:
        result: SearchResult = SEARCHERS[cfg.searcher](bp, train, val, ga)
        best = result.best
        fp = fit_pipeline(best.genome, bp, train, seed=best.seed)
    except (SearchError, PipelineFailure) as exc:
        log.warning("run %d fold %d failed: %s", run, fold, exc)
        rec.status, rec.error = "failed", str(exc)
        return rec

    usage = _usage(best.genome, bp, outer_train.n_rows)
    rec.test_mcc = mcc_score(test.target, fp.predict(test), ds.n_classes)
    rec.fitness = best.fitness
    rec.pct_instances, rec.pct_features, rec.pct_data = usage.pct_instances, usage.pct_features, usage.pct_data
    rec.dr_mode = dr_mode(best.genome).value
    rec.total_evaluations = result.total_evaluations
    rec.pipelines_fitted = result.pipelines_fitted
    rec.restarts = result.restarts
    rec.generations = len(result.history)
    rec.failures = result.failures
    rec.wall_time = result.wall_time
    rec.history = [asdict(h) for h in result.history]
    rec.pipeline = fp.to_dict()

    if cfg.retrain_all:
        try:
            fp_all = retrain_all(best.genome, bp, outer_train, cfg.retrain_all_mode, seed=best.seed)
        except PipelineFailure as exc:
            rec.retrain_error = str(exc)
            fp_all = None
        if fp_all is not None:
            rec.test_mcc_all = mcc_score(test.target, fp_all.predict(test), ds.n_classes)
            rec.pct_instances_all = 1.0
            rec.pct_features_all = _usage(fp_all.genome, bp, outer_train.n_rows).pct_features
            rec.pct_data_all = rec.pct_instances_all * rec.pct_features_all
            rec.pipeline_all = fp_all.to_dict()
    return rec


def run_experiment(cfg: RunConfig) -> RunReport:
    """Every run x outer fold cell, in order; reports are written when output_dir is set."""
    from . import __version__

    ds = load_dataset(cfg)
    records = []
    for run in range(cfg.n_runs):
        for fold, split in enumerate(outer_splits(ds, cfg, run)):
            rec = run_cell(ds, cfg, run, fold, split.train_indices, split.val_indices)
            log.info("run %d fold %d: %s mcc=%s evaluations=%d", run, fold, rec.status,
                     rec.test_mcc, rec.total_evaluations)
            records.append(rec)
    report = RunReport(cfg, records, __version__)
    if cfg.output_dir is not None:
        emit_reports(report, cfg.output_dir)
    return report


# ---------------------------------------------------------------------------
# report files


def fmt(v) -> str:
    """Six significant digits for floats; everything else as text."""
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def best_pipeline_row(rec: CellRecord) -> dict:
    """Best-pipeline summary: data percentages, chosen methods and score."""
    steps = {s["step_id"]: s["method"] for s in rec.pipeline["steps"]}
    return {
        "%I": rec.pct_instances, "%F": rec.pct_features,
        "Imp": "/".join(steps[s.value] for s in (StepId.IMPUTE_NUMERICAL, StepId.IMPUTE_CATEGORICAL)
                        if s.value in steps) or None,
        "Scaler": steps.get(StepId.SCALE.value), "Encoder": steps.get(StepId.ENCODE.value),
        "Model": rec.pipeline["model"]["model_id"], "MCC": rec.test_mcc,
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _summary_md(report: RunReport) -> str:
    agg = report.aggregates()

    def cell(col):
        a = agg.get(col)
        return "n/a" if a is None else f"{fmt(a['mean'])} ± {fmt(a['std'])}"

    cfg = report.config
    lines = [f"# {cfg.searcher} summary", "",
             f"{len(report.ok_records)} of {len(report.records)} cells completed "
             f"({cfg.n_runs} runs x {max(cfg.outer_cv_k, 1)} folds, seed {cfg.seed}).", "",
             "| Metric | Searched | Retrained on all data |", "| --- | --- | --- |"]
    for label, col in (("MCC", "test_mcc"), ("% instances", "pct_instances"),
                       ("% features", "pct_features"), ("% data", "pct_data")):
        lines.append(f"| {label} | {cell(col)} | {cell(col + '_all')} |")
    lines += ["", "| Evaluations | Restarts |", "| --- | --- |",
              f"| {cell('total_evaluations')} | {cell('restarts')} |", "",
              "| DR mode | Count |", "| --- | --- |"]
    lines += [f"| {k} | {v} |" for k, v in report.dr_histogram().items()]
    return "\n".join(lines) + "\n"


def emit_reports(report: RunReport, outdir) -> list[Path]:
    """Write report.json, per-cell pipelines and histories, CSV tables and summary.md."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pipelines").mkdir(exist_ok=True)
    (out / "history").mkdir(exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(report.to_json(), encoding="utf-8")

    for rec in report.ok_records:
        tag = f"r{rec.run:03d}_f{rec.fold:02d}"
        doc = {**best_pipeline_row(rec), "pipeline": rec.pipeline}
        if rec.pipeline_all is not None:
            doc["pipeline_all"] = rec.pipeline_all
        p = out / "pipelines" / f"best_pipeline_{tag}.json"
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        h = out / "history" / f"history_{tag}.csv"
        cols = ["generation", "best_fitness", "mean_fitness", "restarts", "evaluations"]
        _write_csv(h, cols, [[row[c] for c in cols] for row in rec.history])
        written += [p, h]

    tables = {
        "dr_histogram.csv": (["dr_mode", "count"], [[k, v] for k, v in report.dr_histogram().items()]),
        "evaluations.csv": (["run", "fold", "status", "total_evaluations", "pipelines_fitted",
                             "generations", "restarts", "failures"],
                            [[r.run, r.fold, r.status, r.total_evaluations, r.pipelines_fitted,
                              r.generations, r.restarts, r.failures] for r in report.records]),
        "records.csv": (["run", "fold", "status", "test_mcc", "fitness", "pct_instances",
                         "pct_features", "pct_data", "dr_mode", "test_mcc_all", "pct_data_all"],
                        [[r.run, r.fold, r.status, r.test_mcc, r.fitness, r.pct_instances,
                          r.pct_features, r.pct_data, r.dr_mode, r.test_mcc_all, r.pct_data_all]
                         for r in report.records]),
        "best_pipelines.csv": (["run", "fold", "%I", "%F", "Imp", "Scaler", "Encoder", "Model", "MCC"],
                               [[r.run, r.fold, *best_pipeline_row(r).values()] for r in report.ok_records]),
        "timings.csv": (["run", "fold", "wall_time"], [[r.run, r.fold, r.wall_time] for r in report.records]),
    }
    for name, (header, rows) in tables.items():
        _write_csv(out / name, header, rows)
        written.append(out / name)
    (out / "summary.md").write_text(_summary_md(report), encoding="utf-8")
    written.append(out / "summary.md")
    return written
