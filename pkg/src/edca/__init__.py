"""Evolutionary data-centric AutoML for tabular classification."""

__version__ = "0.1.0"

from .analyzer import Blueprint, Kind, SearchSpaceConfig, analyze
from .dataset import Dataset, SyntheticSpec, generate_synthetic, kfold, load_csv, split_holdout
from .evolution import GAConfig, SearchResult, evolve, random_search
from .harness import RunConfig, RunReport, emit_reports, retrain_all, run_experiment
from .metrics import data_usage, fitness_from_mcc, mcc, mcc_score
from .pipeline import FittedPipeline, Genome, PipelineFailure, fit_pipeline

__all__ = [
    "Blueprint", "Dataset", "FittedPipeline", "GAConfig", "Genome", "Kind", "PipelineFailure",
    "RunConfig", "RunReport", "SearchResult", "SearchSpaceConfig", "SyntheticSpec", "analyze",
    "data_usage", "emit_reports", "evolve", "fit_pipeline", "fitness_from_mcc", "generate_synthetic",
    "kfold", "load_csv", "mcc", "mcc_score", "random_search", "retrain_all", "run_experiment",
    "split_holdout",
]
