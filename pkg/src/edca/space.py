"""Hyperparameter space primitives shared by preprocessing steps and learners."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Choice:
    values: tuple

    def sample(self, rng: np.random.Generator) -> Any:
        return self.values[int(rng.integers(len(self.values)))]

    def contains(self, value: Any) -> bool:
        return value in self.values

    def clamp(self, value: Any) -> Any:
        return value if value is not None and value in self.values else self.values[0]

    def to_dict(self) -> dict:
        return {"type": "choice", "values": list(self.values)}


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"empty integer range [{self.low}, {self.high}]")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, value: Any) -> bool:
        return isinstance(value, (int, np.integer)) and not isinstance(value, bool) \
            and self.low <= value <= self.high

    def clamp(self, value: Any) -> int:
        try:
            v = int(round(float(value)))
        except (TypeError, ValueError):
            return self.low
        return min(max(v, self.low), self.high)

    def to_dict(self) -> dict:
        return {"type": "int", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class FloatRange:
    low: float
    high: float
    log: bool = False

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError(f"empty float range [{self.low}, {self.high}]")
        if self.log and self.low <= 0:
            raise ValueError("log-scaled range needs a positive lower bound")

    def sample(self, rng: np.random.Generator) -> float:
        if self.log:
            v = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
        else:
            v = rng.uniform(self.low, self.high)
        # exp/log round-off can step just outside the bounds
        return float(min(max(v, self.low), self.high))

    def contains(self, value: Any) -> bool:
        return isinstance(value, (float, int, np.floating)) and not isinstance(value, bool) \
            and self.low <= value <= self.high

    def clamp(self, value: Any) -> float:
        try:
            v = float(value)
        except (TypeError, ValueError):
            return float(self.low)
        if math.isnan(v):
            return float(self.low)
        return float(min(max(v, self.low), self.high))

    def to_dict(self) -> dict:
        return {"type": "float", "low": self.low, "high": self.high,
                "scale": "log" if self.log else "linear"}


Param = Choice | IntRange | FloatRange


@dataclass(frozen=True)
class MethodSpec:
    """One selectable method of a pipeline step and its hyperparameter space."""

    name: str
    params: tuple[tuple[str, Param], ...] = ()

    @property
    def space(self) -> dict[str, Param]:
        return dict(self.params)

    def sample_hyperparameters(self, rng: np.random.Generator) -> dict[str, Any]:
        return {name: p.sample(rng) for name, p in self.params}

    def clamp_hyperparameters(self, hp: dict[str, Any]) -> dict[str, Any]:
        # keys outside the declared space (fixed learner options) pass through untouched
        out = dict(hp)
        for name, p in self.params:
            out[name] = p.clamp(hp.get(name))
        return out

    def contains(self, hp: dict[str, Any]) -> bool:
        return all(name in hp and p.contains(hp[name]) for name, p in self.params)

    def to_dict(self) -> dict:
        return {"method": self.name, "hyperparameters": {n: p.to_dict() for n, p in self.params}}


def method(name: str, **params: Param) -> MethodSpec:
    return MethodSpec(name, tuple(params.items()))


class StepId(str, enum.Enum):
    """Pipeline step slots, listed in their fixed execution order."""

    DROP_IDENTIFIERS = "drop_identifiers"
    IMPUTE_NUMERICAL = "impute_numerical"
    IMPUTE_CATEGORICAL = "impute_categorical"
    ENCODE = "encode"
    SCALE = "scale"
    MODEL = "model"


@dataclass(frozen=True)
class ConfiguredStep:
    """A concrete gene: the chosen method of one step and its hyperparameter values."""

    step_id: StepId
    method: str
    hyperparameters: dict = field(default_factory=dict)

    def __hash__(self):
        return hash((self.step_id, self.method, tuple(sorted(self.hyperparameters.items()))))

    def to_dict(self) -> dict:
        return {"step_id": self.step_id.value, "method": self.method,
                "hyperparameters": {k: _plain(v) for k, v in sorted(self.hyperparameters.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfiguredStep":
        return cls(StepId(d["step_id"]), d["method"], dict(d.get("hyperparameters", {})))


def _plain(v: Any) -> Any:
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def param_from_dict(d: dict) -> Param:
    kind = d["type"]
    if kind == "choice":
        return Choice(tuple(d["values"]))
    if kind == "int":
        return IntRange(int(d["low"]), int(d["high"]))
    if kind == "float":
        return FloatRange(float(d["low"]), float(d["high"]), d.get("scale", "linear") == "log")
    raise ValueError(f"unknown parameter type {kind!r}")
