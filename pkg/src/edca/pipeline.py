"""Genomes and their realisation as fitted, serialisable pipelines.

A genome holds optional instance/feature index-set genes, one configured gene
per blueprint preprocessing step, and a model gene. Fitting applies the
index sets to the training rows, runs the preprocessing steps in blueprint
order (statistics come from the reduced training rows only) and trains the
model last.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .analyzer import Blueprint, Kind
from .dataset import Column, Dataset, _format_number
from .learners import FittedModel, LearnerError, fit_model
from .space import ConfiguredStep, StepId

MISSING_SENTINEL = "__missing__"
PIPELINE_FORMAT = "edca.pipeline/1"


class PipelineFailure(RuntimeError):
    """A genome could not be turned into a working pipeline."""


class SchemaError(ValueError):
    """Rows handed to a pipeline do not match its training schema."""


class StepError(TypeError):
    """A preprocessing operator was applied to columns of the wrong type."""


@dataclass(frozen=True)
class Genome:
    is_gene: tuple[int, ...] | None
    fs_gene: tuple[int, ...] | None
    prep_genes: tuple[ConfiguredStep, ...]
    model_gene: ConfiguredStep

    def __post_init__(self):
        for name in ("is_gene", "fs_gene"):
            g = getattr(self, name)
            if g is not None:
                object.__setattr__(self, name, tuple(int(i) for i in g))
        object.__setattr__(self, "prep_genes", tuple(self.prep_genes))

    def slots(self) -> dict[str, Any]:
        """Gene slots by name; mutation touches exactly one of these."""
        out: dict[str, Any] = {"is": self.is_gene, "fs": self.fs_gene}
        for g in self.prep_genes:
            out[g.step_id.value] = g
        out["model"] = self.model_gene
        return out

    def replace_slot(self, name: str, value: Any) -> "Genome":
        if name == "is":
            return Genome(value, self.fs_gene, self.prep_genes, self.model_gene)
        if name == "fs":
            return Genome(self.is_gene, value, self.prep_genes, self.model_gene)
        if name == "model":
            return Genome(self.is_gene, self.fs_gene, self.prep_genes, value)
        preps = tuple(value if g.step_id.value == name else g for g in self.prep_genes)
        return Genome(self.is_gene, self.fs_gene, preps, self.model_gene)

    def to_dict(self) -> dict:
        return {
            "is_gene": None if self.is_gene is None else list(self.is_gene),
            "fs_gene": None if self.fs_gene is None else list(self.fs_gene),
            "prep_genes": [g.to_dict() for g in self.prep_genes],
            "model_gene": self.model_gene.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        return cls(None if d["is_gene"] is None else tuple(d["is_gene"]),
                   None if d["fs_gene"] is None else tuple(d["fs_gene"]),
                   tuple(ConfiguredStep.from_dict(g) for g in d["prep_genes"]),
                   ConfiguredStep.from_dict(d["model_gene"]))


def apply_dr(genome: Genome, train_rows: Sequence[int],
             feature_names: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """Rows and features selected by the genome's index-set genes, in sorted order."""
    rows = np.asarray(train_rows, dtype=np.int64)
    if genome.is_gene is not None:
        rows = rows[np.asarray(sorted(genome.is_gene), dtype=np.int64)]
    names = list(feature_names)
    if genome.fs_gene is not None:
        names = [names[i] for i in sorted(genome.fs_gene)]
    return rows, names


# ---------------------------------------------------------------------------
# operator kernels


def _require(data: dict[str, np.ndarray], text: bool, step: ConfiguredStep) -> None:
    for name, col in data.items():
        if (col.dtype == object) != text:
            want = "categorical" if text else "numerical"
            raise StepError(f"{step.step_id.value}/{step.method} needs {want} columns; "
                            f"{name!r} is not")


def _finite_or(v: float, default: float) -> float:
    return float(v) if math.isfinite(v) else default


def _most_frequent(col: np.ndarray) -> str:
    present = [v for v in col if v is not None]
    if not present:
        return MISSING_SENTINEL
    keys, counts = np.unique(np.array(present, dtype=object).astype(str), return_counts=True)
    return str(keys[np.argmax(counts)])  # np.unique sorts, so ties go to the smallest key


def fit_step(step: ConfiguredStep, data: dict[str, np.ndarray]) -> dict:
    """Learn the state of one preprocessing operator from ``data``."""
    sid, m = step.step_id, step.method
    if sid is StepId.DROP_IDENTIFIERS:
        return {"dropped": sorted(data)}
    if sid is StepId.IMPUTE_NUMERICAL:
        _require(data, False, step)
        fill = {}
        for name, col in data.items():
            present = col[~np.isnan(col)]
            if m == "constant" or not len(present):
                fill[name] = 0.0
            elif m == "mean":
                fill[name] = _finite_or(present.mean(), 0.0)
            elif m == "median":
                fill[name] = _finite_or(np.median(present), 0.0)
            else:
                raise StepError(f"unknown numerical imputer {m!r}")
        return {"fill": fill}
    if sid is StepId.IMPUTE_CATEGORICAL:
        _require(data, True, step)
        if m == "constant":
            return {"fill": {name: MISSING_SENTINEL for name in data}}
        if m == "most_frequent":
            return {"fill": {name: _most_frequent(col) for name, col in data.items()}}
        raise StepError(f"unknown categorical imputer {m!r}")
    if sid is StepId.ENCODE:
        _require(data, True, step)
        if m not in ("onehot", "ordinal"):
            raise StepError(f"unknown encoder {m!r}")
        return {"categories": {name: sorted({v for v in col if v is not None})
                               for name, col in data.items()}}
    if sid is StepId.SCALE:
        _require(data, False, step)
        state: dict[str, dict] = {}
        for name, col in data.items():
            x = col[~np.isnan(col)]
            if not len(x):
                state[name] = {"center": 0.0, "scale": 0.0}
            elif m == "standard":
                state[name] = {"center": float(x.mean()), "scale": float(x.std())}
            elif m == "minmax":
                state[name] = {"center": float(x.min()), "scale": float(x.max() - x.min())}
            elif m == "robust":
                q1, med, q3 = np.percentile(x, [25, 50, 75])
                state[name] = {"center": float(med), "scale": float(q3 - q1)}
            else:
                raise StepError(f"unknown scaler {m!r}")
        return state
    raise StepError(f"{sid} is not a preprocessing step")


def apply_step(step: ConfiguredStep, state: dict, data: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Transform ``data`` with a fitted operator state; deterministic."""
    sid, m = step.step_id, step.method
    if sid is StepId.DROP_IDENTIFIERS:
        return {k: v for k, v in data.items() if k not in set(state["dropped"])}
    if sid is StepId.IMPUTE_NUMERICAL:
        _require(data, False, step)
        return {name: np.where(np.isnan(col), state["fill"].get(name, 0.0), col)
                for name, col in data.items()}
    if sid is StepId.IMPUTE_CATEGORICAL:
        _require(data, True, step)
        out = {}
        for name, col in data.items():
            fill = state["fill"].get(name, MISSING_SENTINEL)
            new = col.copy()
            new[[v is None for v in col]] = fill
            out[name] = new
        return out
    if sid is StepId.ENCODE:
        _require(data, True, step)
        out = {}
        for name, col in data.items():
            cats = state["categories"][name]
            pos = {c: i for i, c in enumerate(cats)}
            # unseen and missing categories go to the reserved index len(cats)
            codes = np.array([pos.get(v, len(cats)) for v in col], dtype=np.int64)
            if m == "ordinal":
                out[name] = codes.astype(np.float64)
            else:
                block = np.zeros((len(col), len(cats) + 1))
                block[np.arange(len(col)), codes] = 1.0
                for i, c in enumerate(cats):
                    out[f"{name}={c}"] = block[:, i]
        return out
    if sid is StepId.SCALE:
        _require(data, False, step)
        out = {}
        for name, col in data.items():
            p = state[name]
            if p["scale"] == 0.0:
                # zero variance / range / IQR: the feature carries no spread
                out[name] = np.where(np.isnan(col), np.nan, 0.0)
            else:
                out[name] = (col - p["center"]) / p["scale"]
        return out
    raise StepError(f"{sid} is not a preprocessing step")


# ---------------------------------------------------------------------------
# fitted pipelines


_STEP_KINDS = {
    StepId.IMPUTE_NUMERICAL: (Kind.NUMERICAL,),
    StepId.IMPUTE_CATEGORICAL: (Kind.CATEGORICAL, Kind.BINARY),
    StepId.ENCODE: (Kind.CATEGORICAL,),
    StepId.SCALE: (Kind.NUMERICAL,),
}


def _as_keys(col: Column) -> np.ndarray:
    if col.is_text:
        return col.values.copy()
    out = np.empty(len(col), dtype=object)
    out[:] = [None if math.isnan(v) else _format_number(float(v)) for v in col.values]
    return out


def _raw_frame(ds: Dataset, names: Sequence[str], kinds: dict[str, Kind]) -> dict[str, np.ndarray]:
    frame = {}
    for name in names:
        if not ds.has_column(name):
            raise SchemaError(f"missing column {name!r}")
        col = ds.column(name)
        if kinds[name] is Kind.NUMERICAL:
            if col.is_text:
                raise SchemaError(f"column {name!r} was numerical at fit time but holds text")
            frame[name] = col.values.astype(np.float64)
        else:
            frame[name] = _as_keys(col)
    return frame


@dataclass
class FittedPipeline:
    genome: Genome
    fs_names: tuple[str, ...]
    kinds: dict[str, Kind]
    steps: list[tuple[ConfiguredStep, dict]]
    binary_state: dict[str, str]
    model: FittedModel
    training_dims: tuple[int, int]
    n_classes: int
    max_instances: int
    max_features: int
    label_names: tuple[str, ...] = ()
    target_name: str = "target"
    output_columns: tuple[str, ...] = field(default_factory=tuple)

    def transform(self, ds: Dataset) -> np.ndarray:
        """Raw rows to the numeric model matrix (no instance selection here)."""
        frame = _raw_frame(ds, self.fs_names, self.kinds)
        for step, state in self.steps:
            if step.step_id is StepId.DROP_IDENTIFIERS:
                continue
            names = [n for n in frame if self.kinds.get(n) in _STEP_KINDS[step.step_id]]
            sub = apply_step(step, state, {n: frame[n] for n in names})
            if step.step_id is StepId.ENCODE:
                frame = _splice(frame, names, sub)
            else:
                frame.update(sub)
        cols = []
        for n in self.output_columns:
            if n in self.binary_state:
                cols.append(np.array([v == self.binary_state[n] for v in frame[n]], dtype=np.float64))
            else:
                cols.append(np.asarray(frame[n], dtype=np.float64))
        X = np.column_stack(cols) if cols else np.zeros((ds.n_rows, 0))
        # missing cells with no imputer in the blueprint (absent at analysis time)
        return np.where(np.isnan(X), 0.0, X)

    def predict(self, ds: Dataset) -> np.ndarray:
        if ds.n_rows == 0:
            return np.zeros(0, dtype=np.int64)
        return self.model.predict(self.transform(ds))

    @property
    def is_fraction(self) -> float:
        return self.training_dims[0] / self.max_instances

    @property
    def fs_fraction(self) -> float:
        return len(self.fs_names) / self.max_features

    def method_of(self, step_id: StepId) -> str | None:
        for step, _ in self.steps:
            if step.step_id is step_id:
                return step.method
        return None

    def to_dict(self) -> dict:
        return {
            "format": PIPELINE_FORMAT,
            "is_fraction": self.is_fraction,
            "fs_names": list(self.fs_names),
            "kinds": {n: self.kinds[n].value for n in self.fs_names},
            "steps": [{"step_id": s.step_id.value, "method": s.method,
                       "hyperparameters": s.to_dict()["hyperparameters"], "state": st}
                      for s, st in self.steps],
            "binary": dict(self.binary_state),
            "output_columns": list(self.output_columns),
            "model": self.model.to_dict(),
            "genome": self.genome.to_dict(),
            "training_dims": list(self.training_dims),
            "max_instances": self.max_instances,
            "max_features": self.max_features,
            "n_classes": self.n_classes,
            "label_names": list(self.label_names),
            "target_name": self.target_name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPipeline":
        if d.get("format") != PIPELINE_FORMAT:
            raise ValueError(f"not a pipeline document (format={d.get('format')!r})")
        steps = [(ConfiguredStep(StepId(s["step_id"]), s["method"], dict(s["hyperparameters"])),
                  s["state"]) for s in d["steps"]]
        return cls(Genome.from_dict(d["genome"]), tuple(d["fs_names"]),
                   {n: Kind(k) for n, k in d["kinds"].items()}, steps, dict(d["binary"]),
                   FittedModel.from_dict(d["model"]), tuple(d["training_dims"]),
                   int(d["n_classes"]), int(d["max_instances"]), int(d["max_features"]),
                   tuple(d["label_names"]), d["target_name"], tuple(d["output_columns"]))


def _splice(frame: dict, replaced: list[str], new: dict) -> dict:
    """Swap encoded columns in for their source columns, keeping column order."""
    out = {}
    for name, col in frame.items():
        if name in replaced:
            for k, v in new.items():
                if k == name or k.startswith(name + "="):
                    out[k] = v
        else:
            out[name] = col
    return out


def fit_pipeline(genome: Genome, blueprint: Blueprint, train: Dataset, seed: int = 0) -> FittedPipeline:
    """Fit every step of ``genome`` on the DR-reduced ``train`` rows.

    Raises :class:`PipelineFailure` when a step or the model cannot be fitted
    and :class:`SchemaError` when ``train`` lacks blueprint columns.
    """
    if genome.is_gene is not None and train.n_rows != blueprint.max_instances:
        raise SchemaError(f"instance gene indexes {blueprint.max_instances} rows, "
                          f"train has {train.n_rows}")
    if len(genome.prep_genes) != len(blueprint.prep_steps):
        raise SchemaError("genome does not match the blueprint's preprocessing steps")
    rows, names = apply_dr(genome, np.arange(train.n_rows), blueprint.feature_names)
    reduced = train.take(rows)
    kinds = {n: blueprint.feature_kinds[n] for n in names}
    frame = _raw_frame(reduced, names, kinds)
    fitted_steps: list[tuple[ConfiguredStep, dict]] = []
    try:
        with np.errstate(all="raise"):
            for step in genome.prep_genes:
                if step.step_id is StepId.DROP_IDENTIFIERS:
                    state = fit_step(step, {n: None for n in blueprint.identifier_columns})
                    fitted_steps.append((step, state))
                    continue
                sub_names = [n for n in frame if kinds.get(n) in _STEP_KINDS[step.step_id]]
                sub = {n: frame[n] for n in sub_names}
                state = fit_step(step, sub)
                fitted_steps.append((step, state))
                transformed = apply_step(step, state, sub)
                if step.step_id is StepId.ENCODE:
                    frame = _splice(frame, sub_names, transformed)
                else:
                    frame.update(transformed)
        binary_state = {}
        for n in names:
            if kinds[n] is Kind.BINARY:
                values = sorted({v for v in frame[n] if v is not None and v != MISSING_SENTINEL})
                binary_state[n] = values[-1] if values else MISSING_SENTINEL
        fp = FittedPipeline(genome, tuple(names), kinds, fitted_steps, binary_state, None,
                            (len(rows), len(names)), blueprint.n_classes,
                            blueprint.max_instances, blueprint.max_features,
                            train.label_names, train.target_name, tuple(frame))
        X = fp.transform(reduced)
        fp.model = fit_model(genome.model_gene, X, reduced.target, seed=seed,
                             n_classes=blueprint.n_classes)
    except (LearnerError, FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        raise PipelineFailure(str(exc)) from exc
    return fp


def predict(fp: FittedPipeline, rows: Dataset) -> np.ndarray:
    return fp.predict(rows)
