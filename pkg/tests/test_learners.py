import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edca.learners import (FittedModel, LearnerError, default_model_space, fit_model,
                           sample_model_gene, softmax_loss_grad, tree_depth)
from edca.metrics import mcc_score
from edca.space import ConfiguredStep, StepId


def gene(model_id, **hp):
    return ConfiguredStep(StepId.MODEL, model_id, hp)


def blobs(n=120, d=3, k=3, sep=4.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    centres = rng.normal(0, sep, size=(k, d))
    return centres[y] + rng.normal(size=(n, d)), y


def fd_gradient(W, b, X, Y, l2, h=1e-6):
    gW, gb = np.zeros_like(W), np.zeros_like(b)
    for arr, g in ((W, gW), (b, gb)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = softmax_loss_grad(W, b, X, Y, l2)[0]
            arr[idx] = old - h
            down = softmax_loss_grad(W, b, X, Y, l2)[0]
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
    return gW, gb


@pytest.mark.parametrize("seed", range(20))
def test_logreg_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(8, 3))
    Y = np.eye(3)[rng.integers(0, 3, 8)]
    W, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    l2 = float(rng.uniform(0, 1))
    _, gW, gb = softmax_loss_grad(W, b, X, Y, l2)
    nW, nb = fd_gradient(W, b, X, Y, l2)
    analytic, numeric = np.concatenate([gW.ravel(), gb]), np.concatenate([nW.ravel(), nb])
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic + numeric) < 1e-5


def test_gnb_posteriors_sum_to_one():
    X, y = blobs(seed=1)
    m = fit_model(gene("gnb", var_smoothing=1e-9), X, y)
    P = m.predict_proba(np.random.default_rng(2).normal(0, 10, size=(500, 3)))
    assert np.all(np.abs(P.sum(axis=1) - 1) < 1e-9)


def test_gnb_separated_1d():
    rng = np.random.default_rng(0)
    y = np.arange(200) % 2
    X = (y * 10.0 + rng.normal(size=200))[:, None]
    m = fit_model(gene("gnb", var_smoothing=1e-9), X[:150], y[:150])
    assert mcc_score(y[150:], m.predict(X[150:]), 2) > 0.9


@pytest.mark.parametrize("seed", range(5))
def test_single_tree_forest_equals_tree(seed):
    X, y = blobs(seed=seed, sep=1.0)
    hp = dict(criterion="gini", max_depth=6, min_samples_split=2)
    tree = fit_model(gene("dtree", **hp), X, y, seed=seed)
    forest = fit_model(gene("rforest", n_estimators=1, bootstrap=False, max_features="all", **hp),
                       X, y, seed=seed)
    assert json.dumps(tree.params, default=str) == json.dumps(forest.params, default=str)
    Z = np.random.default_rng(9).normal(size=(50, 3))
    assert np.array_equal(tree.predict_proba(Z), forest.predict_proba(Z))


@pytest.mark.parametrize("depth", [1, 2, 3, 5])
def test_dtree_respects_max_depth(depth):
    X, y = blobs(sep=0.5)
    m = fit_model(gene("dtree", criterion="entropy", max_depth=depth, min_samples_split=2), X, y)
    assert tree_depth(m.params["trees"][0]) <= depth


def test_stump_cannot_split_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = (X[:, 0] != X[:, 1]).astype(int)
    m = fit_model(gene("dtree", criterion="gini", max_depth=1, min_samples_split=2), X, y)
    assert abs(mcc_score(y, m.predict(X), 2)) < 1e-12


def brute_force_stump(X, y, k):
    """Exhaustive gini stump: lowest weighted impurity over all midpoints."""
    def gini(lab):
        p = np.bincount(lab, minlength=k) / len(lab)
        return 1 - (p * p).sum()

    best = (np.inf, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for t in (vals[:-1] + vals[1:]) / 2:
            mask = X[:, f] <= t
            s = (mask.sum() * gini(y[mask]) + (~mask).sum() * gini(y[~mask])) / len(y)
            if s < best[0] - 1e-12:
                best = (s, f, t)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_stump_matches_exhaustive_search(seed):
    X, y = blobs(n=40, d=3, sep=1.0, seed=seed)
    _, f, t = brute_force_stump(X, y, 3)
    m = fit_model(gene("dtree", criterion="gini", max_depth=1, min_samples_split=2), X, y)
    tree = m.params["trees"][0]
    assert tree["feature"][0] == f
    assert tree["threshold"][0] == pytest.approx(t, abs=1e-12)


def test_knn_one_predicts_training_points():
    X, y = blobs(sep=0.3)
    m = fit_model(gene("knn", k=1, weights="uniform"), X, y)
    assert np.array_equal(m.predict(X), y)


def test_knn_k_clamped():
    X, y = blobs(n=6)
    m = fit_model(gene("knn", k=25, weights="distance"), X, y)
    assert m.hyperparameters["k"] == 6 and m.repairs


def test_logreg_learns_blobs():
    X, y = blobs(sep=5.0)
    m = fit_model(gene("logreg", learning_rate=0.5, l2=1e-4, epochs=300), X, y)
    assert mcc_score(y, m.predict(X), 3) > 0.9


def test_logreg_divergence_is_error():
    X, y = blobs()
    with pytest.raises(LearnerError):
        fit_model(gene("logreg", learning_rate=1e308, l2=10.0, epochs=50), X * 1e300, y)


def test_bad_inputs():
    X, y = blobs(n=10)
    with pytest.raises(LearnerError):
        fit_model(gene("gnb", var_smoothing=1e-9), X, np.zeros(10, int))
    with pytest.raises(LearnerError):
        fit_model(gene("gnb", var_smoothing=1e-9), X[:, :0], y)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(LearnerError):
        fit_model(gene("gnb", var_smoothing=1e-9), bad, y)


def test_sampling_uniform_and_in_range():
    space = default_model_space()
    rng = np.random.default_rng(0)
    genes = [sample_model_gene(space, rng) for _ in range(10_000)]
    freq = {m: sum(g.method == m for g in genes) / len(genes) for m in space.model_ids}
    assert all(abs(f - 0.2) < 0.02 for f in freq.values())
    lrs = [g.hyperparameters["learning_rate"] for g in genes if g.method == "logreg"]
    assert 1e-4 <= min(lrs) and max(lrs) <= 1.0
    a = sample_model_gene(space, np.random.default_rng(5))
    assert a == sample_model_gene(space, np.random.default_rng(5))


@pytest.mark.parametrize("model", ["logreg", "gnb", "knn", "dtree", "rforest"])
def test_fit_reproducible_and_serializable(model):
    X, y = blobs(n=60)
    g = ConfiguredStep(StepId.MODEL, model, default_model_space().entry(model)
                       .sample_hyperparameters(np.random.default_rng(3)))
    a, b = fit_model(g, X, y, seed=11), fit_model(g, X, y, seed=11)
    da = json.dumps(a.to_dict(), sort_keys=True)
    assert da == json.dumps(b.to_dict(), sort_keys=True)
    back = FittedModel.from_dict(json.loads(da))
    assert np.array_equal(back.predict_proba(X), a.predict_proba(X))


@given(st.integers(0, 2**31 - 1))
def test_probabilities_are_distributions(seed):
    X, y = blobs(n=30, seed=seed % 1000)
    g = sample_model_gene(default_model_space(), np.random.default_rng(seed))
    try:
        m = fit_model(g, X, y, seed=seed)
    except LearnerError:
        return
    P = m.predict_proba(X)
    assert P.shape == (30, 3)
    assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1)
    assert set(m.predict(X)) <= {0, 1, 2}
