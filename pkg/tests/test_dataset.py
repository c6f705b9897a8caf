import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edca.dataset import (Column, DataError, Dataset, SyntheticSpec, generate_synthetic, kfold,
                          load_csv, split_holdout, write_csv)
from edca.metrics import mcc_score
from edca.learners import fit_model
from edca.space import ConfiguredStep, StepId


def labelled(counts):
    y = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    x = Column.numbers("x", np.arange(len(y), dtype=float))
    return Dataset((x,), y, tuple(f"c{k}" for k in range(len(counts))))


def test_load_australian_shaped(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "aus.csv"
    header = [f"A{i}" for i in range(1, 15)] + ["A15"]
    rows = [[f"{v:.3f}" for v in rng.normal(size=14)] + [str(i % 2)] for i in range(690)]
    path.write_text("\n".join(",".join(r) for r in [header] + rows) + "\n")
    ds = load_csv(path, "A15")
    assert (ds.n_rows, len(ds.columns), ds.n_classes) == (690, 14, 2)


def test_missing_token_substitution(tmp_path):
    path = tmp_path / "age.csv"
    path.write_text("age,y\n25,a\n?,b\n40,a\n")
    ds = load_csv(path, "y", missing_tokens={"?"})
    assert ds.column("age").cells() == [25.0, None, 40.0]
    assert not ds.column("age").is_text


def test_load_errors(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("x,y\n1,a\n2,a\n")
    with pytest.raises(DataError, match="fewer than 2 classes"):
        load_csv(p, "y")
    p.write_text("x,y\n1,a\nfoo,b\n")
    with pytest.raises(DataError, match="mixes"):
        load_csv(p, "y")
    with pytest.raises(DataError):
        load_csv(p, "nope")
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv", "y")


def test_labels_lexicographic(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("x,y\n1,zeta\n2,alpha\n3,mid\n")
    ds = load_csv(p, "y")
    assert ds.label_names == ("alpha", "mid", "zeta")
    assert ds.target.tolist() == [2, 0, 1]


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(SyntheticSpec(n_rows=80), seed=1)
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = load_csv(p, "class")
    assert back.same_cells(ds)
    assert back.label_names == ds.label_names


def test_holdout_sizes_and_determinism():
    ds = labelled([500, 500])
    sp = split_holdout(ds, 0.25, seed=7)
    assert (len(sp.train_indices), len(sp.val_indices)) == (750, 250)
    assert sp == split_holdout(ds, 0.25, seed=7)


def test_holdout_half_of_four_rows():
    ds = labelled([2, 2])
    sp = split_holdout(ds, 0.5, seed=0)
    for part in (sp.train_indices, sp.val_indices):
        assert sorted(ds.target[part].tolist()) == [0, 1]


def test_kfold_sizes_partition():
    ds = labelled([1000, 1000])
    folds = kfold(ds, 5, seed=0)
    assert [len(f.val_indices) for f in folds] == [400] * 5
    allv = np.sort(np.concatenate([f.val_indices for f in folds]))
    assert np.array_equal(allv, np.arange(2000))


def test_kfold_ten_rows_six_four():
    ds = labelled([6, 4])
    for f in kfold(ds, 2, seed=3):
        assert np.bincount(ds.target[f.val_indices]).tolist() == [3, 2]


@given(st.lists(st.integers(2, 25), min_size=2, max_size=4), st.integers(2, 5), st.integers(0, 10**6))
def test_stratified_kfold_balance(counts, k, seed):
    if min(counts) < k:
        return
    ds = labelled(counts)
    folds = kfold(ds, k, seed=seed)
    for f in folds:
        assert set(f.train_indices).isdisjoint(f.val_indices)
        assert len(f.train_indices) + len(f.val_indices) == ds.n_rows
        per = np.bincount(ds.target[f.val_indices], minlength=len(counts))
        assert np.all(np.abs(per - np.array(counts) / k) <= 1)


@given(st.lists(st.integers(2, 30), min_size=2, max_size=4), st.floats(0.1, 0.9), st.integers(0, 10**6))
def test_holdout_properties(counts, frac, seed):
    ds = labelled(counts)
    sp = split_holdout(ds, frac, seed=seed)
    assert len(sp.val_indices) and len(sp.train_indices)
    assert set(sp.train_indices).isdisjoint(sp.val_indices)
    assert len(sp.train_indices) + len(sp.val_indices) == ds.n_rows
    for c, n_c in enumerate(counts):
        got = np.sum(ds.target[sp.val_indices] == c)
        assert 1 <= got <= n_c - 1


def test_synthetic_shape_and_missing_rate():
    ds = generate_synthetic(SyntheticSpec(), seed=0)
    assert len(ds.columns) == 11 and ds.n_rows == 600 and ds.n_classes == 3
    cells = [c.missing for c in ds.columns if c.name != "id"]
    rate = np.mean(np.concatenate(cells))
    assert 0.03 < rate < 0.07
    assert not ds.column("id").missing.any()


def test_synthetic_no_missing():
    ds = generate_synthetic(SyntheticSpec(missing_rate=0.0), seed=0)
    assert not any(c.missing.any() for c in ds.columns)


def test_synthetic_separable_one_nn():
    ds = generate_synthetic(SyntheticSpec(n_numerical=2, n_categorical=0, n_binary=0,
                                          with_identifier=False, missing_rate=0.0,
                                          class_sep=50.0), seed=0)
    sp = split_holdout(ds, 0.25, seed=0)
    X = np.column_stack([c.values for c in ds.columns])
    m = fit_model(ConfiguredStep(StepId.MODEL, "knn", {"k": 1, "weights": "uniform"}),
                  X[sp.train_indices], ds.target[sp.train_indices], n_classes=3)
    assert mcc_score(ds.target[sp.val_indices], m.predict(X[sp.val_indices]), 3) > 0.9


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset((Column.numbers("x", [1.0, 2.0]),), np.array([0, 0]), ("a",)).validate()
    with pytest.raises(DataError):
        Dataset((Column.numbers("x", [None, None]),), np.array([0, 1]), ("a", "b")).validate()


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticSpec(n_rows=50), seed=9)
    b = generate_synthetic(SyntheticSpec(n_rows=50), seed=9)
    assert a.same_cells(b)
