import numpy as np
import pytest

from edca.analyzer import (BlueprintError, ColumnProfile, Kind, SearchSpaceConfig, analyze,
                           build_blueprint, infer_column_kinds)
from edca.dataset import Column, Dataset, SyntheticSpec, generate_synthetic
from edca.space import StepId

M = StepId.MODEL


def ds_of(*cols, n=None):
    n = n or len(cols[0].values)
    return Dataset(tuple(cols), np.arange(n) % 2, ("a", "b"))


def profile(name, kind, missing=False):
    return ColumnProfile(name, kind, missing, 5, kind is not Kind.NUMERICAL)


def bp_steps(profiles):
    return build_blueprint(profiles, np.array([0, 1]), 2).step_ids


def test_identifier_and_categorical_integer_threshold():
    n = 1000
    ids = Column.numbers("id", np.arange(n))
    small = Column.numbers("level", np.arange(n) % 30 + 1)
    cont = Column.numbers("x", np.random.default_rng(0).normal(size=n))
    kinds = [p.kind for p in infer_column_kinds(ds_of(ids, small, cont))]
    assert kinds == [Kind.IDENTIFIER, Kind.CATEGORICAL, Kind.NUMERICAL]


def test_binary_and_text():
    yes_no = Column.texts("b", ["y", "n", "y", None])
    words = Column.texts("t", ["a", "b", "c", "a"])
    kinds = [p.kind for p in infer_column_kinds(ds_of(yes_no, words))]
    assert kinds == [Kind.BINARY, Kind.CATEGORICAL]


def test_identifier_needs_no_missing():
    col = Column.texts("key", ["k1", "k2", None, "k4", "k5"])
    assert infer_column_kinds(ds_of(col))[0].kind is Kind.CATEGORICAL


def test_adult_shaped_profile_counts():
    ds = generate_synthetic(SyntheticSpec(n_rows=500, n_numerical=6, n_categorical=7, n_binary=1,
                                          with_identifier=False, missing_rate=0.05), seed=0)
    profiles = infer_column_kinds(ds)
    counts = {k: sum(p.kind is k for p in profiles) for k in Kind}
    assert (counts[Kind.NUMERICAL], counts[Kind.CATEGORICAL], counts[Kind.BINARY]) == (6, 7, 1)
    assert all(p.has_missing for p in profiles)


def test_numerical_only_gives_scale_and_model():
    assert bp_steps([profile("a", Kind.NUMERICAL), profile("b", Kind.NUMERICAL)]) == [StepId.SCALE, M]


def test_australian_shaped_blueprint():
    steps = bp_steps([profile(f"A{i}", Kind.NUMERICAL) for i in range(14)])
    assert StepId.SCALE in steps and StepId.ENCODE not in steps
    assert StepId.IMPUTE_NUMERICAL not in steps and StepId.IMPUTE_CATEGORICAL not in steps


def test_categorical_with_missing():
    steps = bp_steps([profile("c", Kind.CATEGORICAL, missing=True)])
    assert steps == [StepId.IMPUTE_CATEGORICAL, StepId.ENCODE, M]


def test_full_order():
    steps = bp_steps([profile("id", Kind.IDENTIFIER), profile("n", Kind.NUMERICAL, True),
                      profile("c", Kind.CATEGORICAL, True), profile("b", Kind.BINARY)])
    assert steps == [StepId.DROP_IDENTIFIERS, StepId.IMPUTE_NUMERICAL, StepId.IMPUTE_CATEGORICAL,
                     StepId.ENCODE, StepId.SCALE, M]


def test_only_identifiers_rejected():
    with pytest.raises(BlueprintError):
        bp_steps([profile("id", Kind.IDENTIFIER)])


def test_identifiers_excluded_from_features():
    ds = generate_synthetic(SyntheticSpec(n_rows=100), seed=0)
    bp = analyze(ds)
    assert "id" in bp.identifier_columns and "id" not in bp.feature_names
    assert bp.max_features == len(ds.columns) - 1
    assert bp.max_instances == 100


def test_idempotent():
    ds = generate_synthetic(SyntheticSpec(n_rows=120), seed=2)
    assert analyze(ds).to_dict() == analyze(ds).to_dict()


def test_space_config_round_trip():
    cfg = SearchSpaceConfig(scalers=("minmax",), categorical_max_distinct=5)
    again = SearchSpaceConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    bp = analyze(generate_synthetic(SyntheticSpec(n_rows=80), seed=0), cfg)
    assert [o.name for o in bp.steps[bp.step_ids.index(StepId.SCALE)].options] == ["minmax"]
