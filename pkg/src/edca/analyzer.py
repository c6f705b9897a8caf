"""Dataset analysis: per-column kinds and the pipeline blueprint derived from them."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .learners import ModelSpace, default_model_space
from .space import MethodSpec, StepId, method


class Kind(str, enum.Enum):
    BINARY = "binary"
    CATEGORICAL = "categorical"
    NUMERICAL = "numerical"
    IDENTIFIER = "identifier"


class BlueprintError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    kind: Kind
    has_missing: bool
    distinct_count: int
    is_text: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind.value,
                "has_missing": self.has_missing, "distinct_count": self.distinct_count}


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Option spaces offered to each blueprint step."""

    scalers: tuple[str, ...] = ("standard", "minmax", "robust")
    encoders: tuple[str, ...] = ("onehot", "ordinal")
    numerical_imputers: tuple[str, ...] = ("mean", "median", "constant")
    categorical_imputers: tuple[str, ...] = ("most_frequent", "constant")
    models: ModelSpace = field(default_factory=default_model_space)
    categorical_max_distinct: int = 20
    categorical_max_fraction: float = 0.05

    def __post_init__(self):
        for name in ("scalers", "encoders", "numerical_imputers", "categorical_imputers"):
            opts = getattr(self, name)
            if not opts:
                raise ValueError(f"{name} must offer at least one method")
            allowed = _STEP_METHODS[name]
            bad = set(opts) - allowed
            if bad:
                raise ValueError(f"unknown {name}: {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpaceConfig":
        d = dict(d)
        if "models" in d:
            d["models"] = ModelSpace.from_dict(d["models"])
        for k in ("scalers", "encoders", "numerical_imputers", "categorical_imputers"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        return {"scalers": list(self.scalers), "encoders": list(self.encoders),
                "numerical_imputers": list(self.numerical_imputers),
                "categorical_imputers": list(self.categorical_imputers),
                "models": self.models.to_dict(),
                "categorical_max_distinct": self.categorical_max_distinct,
                "categorical_max_fraction": self.categorical_max_fraction}


_STEP_METHODS = {
    "scalers": {"standard", "minmax", "robust"},
    "encoders": {"onehot", "ordinal"},
    "numerical_imputers": {"mean", "median", "constant"},
    "categorical_imputers": {"most_frequent", "constant"},
}


@dataclass(frozen=True)
class StepSpec:
    step_id: StepId
    options: tuple[MethodSpec, ...]

    def option(self, name: str) -> MethodSpec | None:
        for o in self.options:
            if o.name == name:
                return o
        return None

    def to_dict(self) -> dict:
        return {"step_id": self.step_id.value, "options": [o.to_dict() for o in self.options]}


@dataclass(frozen=True, eq=False)
class Blueprint:
    """Fixed pipeline skeleton derived from the training data.

    ``feature_names`` is the post-identifier-drop feature order that feature
    selection indexes into. ``instance_labels`` holds the class of every training
    row that instance selection indexes into.
    """

    steps: tuple[StepSpec, ...]
    feature_kinds: dict[str, Kind]
    feature_names: tuple[str, ...]
    identifier_columns: tuple[str, ...]
    instance_labels: np.ndarray
    n_classes: int
    profiles: tuple[ColumnProfile, ...] = ()

    @property
    def max_instances(self) -> int:
        return len(self.instance_labels)

    @property
    def max_features(self) -> int:
        return len(self.feature_names)

    @property
    def prep_steps(self) -> tuple[StepSpec, ...]:
        return tuple(s for s in self.steps if s.step_id is not StepId.MODEL)

    @property
    def model_step(self) -> StepSpec:
        return self.steps[-1]

    @property
    def step_ids(self) -> list[StepId]:
        return [s.step_id for s in self.steps]

    def has_step(self, step_id: StepId) -> bool:
        return step_id in self.step_ids

    def min_instances(self) -> int:
        return min(self.max_instances, max(10, self.n_classes))

    def to_dict(self) -> dict:
        return {
            "columns": [p.to_dict() for p in self.profiles],
            "steps": [s.to_dict() for s in self.steps],
            "feature_names": list(self.feature_names),
            "identifier_columns": list(self.identifier_columns),
            "max_instances": self.max_instances,
            "max_features": self.max_features,
            "n_classes": self.n_classes,
        }


def _is_integer_valued(values: np.ndarray) -> bool:
    return bool(np.all(np.floor(values) == values))


def infer_column_kinds(ds: Dataset, space: SearchSpaceConfig | None = None) -> list[ColumnProfile]:
    """Assign each feature column one of four kinds.

    Rules, first match wins:

    1. Identifier: no missing cells, every cell distinct, and the column is Text
       or integer-valued (continuous floats are never identifiers).
    2. Binary: exactly two distinct non-missing values.
    3. Categorical: Text, or integer-valued with at most
       ``max(categorical_max_distinct, categorical_max_fraction * n_rows)`` values.
    4. Numerical otherwise.
    """
    space = space or SearchSpaceConfig()
    n = ds.n_rows
    limit = max(space.categorical_max_distinct, space.categorical_max_fraction * n)
    profiles = []
    for col in ds.columns:
        miss = col.missing
        present = col.values[~miss]
        distinct = len(set(present.tolist())) if col.is_text else len(np.unique(present))
        has_missing = bool(miss.any())
        integral = col.is_text or _is_integer_valued(present)
        if not has_missing and n > 0 and distinct == n and integral:
            kind = Kind.IDENTIFIER
        elif distinct == 2:
            kind = Kind.BINARY
        elif col.is_text or (integral and distinct <= limit):
            kind = Kind.CATEGORICAL
        else:
            kind = Kind.NUMERICAL
        profiles.append(ColumnProfile(col.name, kind, has_missing, distinct, col.is_text))
    return profiles


def build_blueprint(profiles: list[ColumnProfile], labels: np.ndarray, n_classes: int,
                    space: SearchSpaceConfig | None = None) -> Blueprint:
    """Keep only the preprocessing steps the profiled data needs.

    Binary columns share the categorical imputer; they are never encoded or
    scaled (the pipeline maps them to 0/1 directly).
    """
    space = space or SearchSpaceConfig()
    kinds = {p.name: p.kind for p in profiles}
    ids = tuple(p.name for p in profiles if p.kind is Kind.IDENTIFIER)
    features = tuple(p.name for p in profiles if p.kind is not Kind.IDENTIFIER)
    if not features:
        raise BlueprintError("no usable features: every column is an identifier")

    def any_of(*ks: Kind, missing: bool = False) -> bool:
        return any(p.kind in ks and (p.has_missing or not missing) for p in profiles)

    steps = []
    if ids:
        steps.append(StepSpec(StepId.DROP_IDENTIFIERS, (method("drop"),)))
    if any_of(Kind.NUMERICAL, missing=True):
        steps.append(StepSpec(StepId.IMPUTE_NUMERICAL,
                              tuple(method(m) for m in space.numerical_imputers)))
    if any_of(Kind.CATEGORICAL, Kind.BINARY, missing=True):
        steps.append(StepSpec(StepId.IMPUTE_CATEGORICAL,
                              tuple(method(m) for m in space.categorical_imputers)))
    if any_of(Kind.CATEGORICAL):
        steps.append(StepSpec(StepId.ENCODE, tuple(method(m) for m in space.encoders)))
    if any_of(Kind.NUMERICAL):
        steps.append(StepSpec(StepId.SCALE, tuple(method(m) for m in space.scalers)))
    steps.append(StepSpec(StepId.MODEL, space.models.methods()))

    labels = np.asarray(labels, dtype=np.int64).copy()
    labels.setflags(write=False)
    return Blueprint(tuple(steps), {n: kinds[n] for n in features}, features, ids,
                     labels, int(n_classes), tuple(profiles))


def analyze(ds: Dataset, space: SearchSpaceConfig | None = None) -> Blueprint:
    """Profile ``ds`` and derive its blueprint in one call."""
    space = space or SearchSpaceConfig()
    return build_blueprint(infer_column_kinds(ds, space), ds.target, ds.n_classes, space)

