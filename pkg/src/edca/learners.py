"""Built-in classifiers and their hyperparameter search spaces.

Five learners are available: multinomial logistic regression trained by
batch gradient descent, Gaussian naive Bayes, k-nearest neighbours, a CART
decision tree and a random forest of those trees. Every fitted model is a
plain bundle of numpy arrays so it can be serialised to JSON and restored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numba
import numpy as np

from .space import (Choice, ConfiguredStep, FloatRange, IntRange, MethodSpec, StepId,
                    method, param_from_dict)

MODEL_IDS = ("logreg", "gnb", "knn", "dtree", "rforest")

# options a gene may carry that are not searched over
FIXED_DEFAULTS: dict[str, dict[str, Any]] = {
    "logreg": {},
    "gnb": {},
    "knn": {},
    "dtree": {"max_features": "all"},
    "rforest": {"criterion": "gini", "min_samples_split": 2, "bootstrap": True,
                "max_features": "sqrt"},
}


class LearnerError(ValueError):
    """Raised when a model cannot be trained on the given data."""


@dataclass(frozen=True)
class ModelSpace:
    entries: tuple[MethodSpec, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("model space is empty")
        for e in self.entries:
            if e.name not in MODEL_IDS:
                raise ValueError(f"unknown model id {e.name!r}")

    def methods(self) -> tuple[MethodSpec, ...]:
        return self.entries

    @property
    def model_ids(self) -> list[str]:
        return [e.name for e in self.entries]

    def entry(self, model_id: str) -> MethodSpec:
        for e in self.entries:
            if e.name == model_id:
                return e
        raise KeyError(model_id)

    def to_dict(self) -> dict:
        return {e.name: {n: p.to_dict() for n, p in e.params} for e in self.entries}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpace":
        return cls(tuple(MethodSpec(mid, tuple((n, param_from_dict(p)) for n, p in params.items()))
                         for mid, params in d.items()))


def default_model_space() -> ModelSpace:
    return ModelSpace((
        method("logreg", learning_rate=FloatRange(1e-4, 1.0, log=True),
               l2=FloatRange(1e-6, 10.0, log=True), epochs=IntRange(50, 500)),
        method("gnb", var_smoothing=FloatRange(1e-12, 1e-6, log=True)),
        method("knn", k=IntRange(1, 25), weights=Choice(("uniform", "distance"))),
        method("dtree", criterion=Choice(("gini", "entropy")), max_depth=IntRange(2, 20),
               min_samples_split=IntRange(2, 20)),
        method("rforest", n_estimators=IntRange(10, 100), max_depth=IntRange(2, 20)),
    ))


def sample_model_gene(space: ModelSpace, rng: np.random.Generator) -> ConfiguredStep:
    entry = space.entries[int(rng.integers(len(space.entries)))]
    return ConfiguredStep(StepId.MODEL, entry.name, entry.sample_hyperparameters(rng))


# ---------------------------------------------------------------------------
# fitted model container


@dataclass
class FittedModel:
    model_id: str
    n_classes: int
    hyperparameters: dict
    params: dict[str, Any]
    train_seed: int = 0
    repairs: tuple[str, ...] = field(default_factory=tuple)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return _PROBA[self.model_id](self, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        # argmax picks the lowest class index on ties
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_classes": self.n_classes,
            "hyperparameters": dict(sorted(self.hyperparameters.items())),
            "train_seed": int(self.train_seed),
            "repairs": list(self.repairs),
            "params": {k: _to_json(v) for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        return cls(d["model_id"], int(d["n_classes"]), dict(d["hyperparameters"]),
                   {k: _from_json(v) for k, v in d["params"].items()},
                   int(d.get("train_seed", 0)), tuple(d.get("repairs", ())))


def _to_json(v):
    if isinstance(v, np.ndarray):
        return {"dtype": str(v.dtype), "shape": list(v.shape), "data": v.ravel().tolist()}
    if isinstance(v, list):
        return [_to_json(x) for x in v]
    if isinstance(v, dict):
        return {k: _to_json(x) for k, x in v.items()}
    return v


def _from_json(v):
    if isinstance(v, dict) and "dtype" in v:
        return np.asarray(v["data"], dtype=v["dtype"]).reshape(v["shape"])
    if isinstance(v, dict):
        return {k: _from_json(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_from_json(x) for x in v]
    return v


def fit_model(gene: ConfiguredStep, X: np.ndarray, y: np.ndarray, seed: int = 0,
              n_classes: int | None = None) -> FittedModel:
    """Train the learner named by ``gene`` on a fully numeric matrix."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise LearnerError("X must be 2-D with one row per label")
    K = int(n_classes if n_classes is not None else (y.max() + 1 if len(y) else 0))
    if len(y) == 0 or X.shape[1] == 0:
        raise LearnerError("empty training matrix")
    if len(np.unique(y)) < 2:
        raise LearnerError("training labels hold a single class")
    if not np.isfinite(X).all():
        raise LearnerError("training matrix has non-finite values")
    if gene.method not in _FIT:
        raise LearnerError(f"unknown model id {gene.method!r}")
    hp = {**FIXED_DEFAULTS[gene.method], **gene.hyperparameters}
    return _FIT[gene.method](hp, X, y, K, int(seed))


# ---------------------------------------------------------------------------
# logistic regression


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def softmax_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray,
                      l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient.

    ``Y`` is the one-hot label matrix.
    """
    n = len(X)
    Z = X @ W + b
    Zs = Z - Z.max(axis=1, keepdims=True)
    logp = Zs - np.log(np.exp(Zs).sum(axis=1, keepdims=True))
    loss = -(Y * logp).sum() / n + 0.5 * l2 * (W * W).sum()
    R = (np.exp(logp) - Y) / n
    return float(loss), X.T @ R + l2 * W, R.sum(axis=0)


def _fit_logreg(hp, X, y, K, seed):
    lr, l2, epochs = float(hp["learning_rate"]), float(hp["l2"]), int(hp["epochs"])
    Y = np.eye(K)[y]
    W = np.zeros((X.shape[1], K))
    b = np.zeros(K)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            _, gW, gb = softmax_loss_grad(W, b, X, Y, l2)
            W -= lr * gW
            b -= lr * gb
    if not (np.isfinite(W).all() and np.isfinite(b).all()):
        raise LearnerError("logistic regression diverged")
    return FittedModel("logreg", K, dict(hp), {"W": W, "b": b}, seed)


def _proba_logreg(m, X):
    return softmax(X @ m.params["W"] + m.params["b"])


# ---------------------------------------------------------------------------
# gaussian naive bayes


def _fit_gnb(hp, X, y, K, seed):
    d = X.shape[1]
    theta = np.zeros((K, d))
    var = np.ones((K, d))
    counts = np.bincount(y, minlength=K).astype(np.float64)
    eps = float(hp["var_smoothing"]) * float(np.var(X, axis=0).max())
    if eps <= 0:
        eps = float(hp["var_smoothing"])
    for k in range(K):
        rows = X[y == k]
        if len(rows):
            theta[k] = rows.mean(axis=0)
            var[k] = rows.var(axis=0) + eps
    with np.errstate(divide="ignore"):
        log_prior = np.log(counts / counts.sum())
    return FittedModel("gnb", K, dict(hp), {"theta": theta, "var": var, "log_prior": log_prior}, seed)


def _proba_gnb(m, X):
    theta, var, log_prior = m.params["theta"], m.params["var"], m.params["log_prior"]
    jll = np.empty((len(X), len(log_prior)))
    for k in range(len(log_prior)):
        jll[:, k] = log_prior[k] - 0.5 * np.sum(np.log(2.0 * np.pi * var[k])) \
            - 0.5 * np.sum((X - theta[k]) ** 2 / var[k], axis=1)
    top = jll.max(axis=1, keepdims=True)
    P = np.exp(jll - top)
    return P / P.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# k nearest neighbours


def _fit_knn(hp, X, y, K, seed):
    k = int(hp["k"])
    repairs = ()
    if k > len(X):
        repairs = (f"k clamped from {k} to {len(X)}",)
        k = len(X)
    hp = {**hp, "k": k}
    return FittedModel("knn", K, hp, {"X": X.copy(), "y": y.copy()}, seed, repairs)


def _sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty((len(A), len(B)))
    step = max(1, int(4e6 // max(1, len(B) * A.shape[1])))
    for s in range(0, len(A), step):
        diff = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _proba_knn(m, X):
    Xt, yt = m.params["X"], m.params["y"]
    k = int(m.hyperparameters["k"])
    D = _sq_distances(X, Xt)
    nn = np.argsort(D, axis=1, kind="stable")[:, :k]
    dist = np.sqrt(np.take_along_axis(D, nn, axis=1))
    labels = yt[nn]
    if m.hyperparameters["weights"] == "distance":
        exact = dist == 0
        with np.errstate(divide="ignore"):
            w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dist)
    else:
        w = np.ones_like(dist)
    votes = np.zeros((len(X), m.n_classes))
    np.add.at(votes, (np.arange(len(X))[:, None], labels), w)
    return votes / votes.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# CART trees

_GINI, _ENTROPY = 0, 1


@numba.njit(cache=True)
def _impurity(counts, total, criterion):
    if total <= 0:
        return 0.0
    acc = 0.0
    if criterion == 0:
        for c in counts:
            p = c / total
            acc += p * p
        return 1.0 - acc
    for c in counts:
        if c > 0:
            p = c / total
            acc -= p * math.log2(p)
    return acc


@numba.njit(cache=True)
def _grow_tree(X, y, rows, n_classes, criterion, max_depth, min_samples_split, max_features, seed):
    np.random.seed(seed)
    n, d = len(rows), X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_classes))
    idx = rows.copy()
    feats = np.arange(d)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    stack_node[0], stack_start[0], stack_end[0], stack_depth[0] = 0, 0, n, 0
    top = 1
    n_nodes = 1
    lcounts = np.zeros(n_classes)
    rcounts = np.zeros(n_classes)

    while top > 0:
        top -= 1
        node, start, end, depth = stack_node[top], stack_start[top], stack_end[top], stack_depth[top]
        m = end - start
        counts = np.zeros(n_classes)
        for i in range(start, end):
            counts[y[idx[i]]] += 1.0
        value[node] = counts
        parent_imp = _impurity(counts, m, criterion)
        if depth >= max_depth or m < min_samples_split or parent_imp <= 1e-15:
            continue

        # partial Fisher-Yates: first `max_features` entries form the candidate set
        n_try = d if max_features >= d else max_features
        if n_try < d:
            for j in range(n_try):
                r = j + np.random.randint(d - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            cand = np.sort(feats[:n_try])
        else:
            cand = feats

        best_score = np.inf
        best_f = -1
        best_t = 0.0
        vals = np.empty(m)
        for f in cand:
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals, kind="mergesort")
            lcounts[:] = 0.0
            rcounts[:] = counts
            for i in range(m - 1):
                lab = y[idx[start + order[i]]]
                lcounts[lab] += 1.0
                rcounts[lab] -= 1.0
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v0 == v1:
                    continue
                nl = i + 1.0
                nr = m - nl
                score = (nl * _impurity(lcounts, nl, criterion)
                         + nr * _impurity(rcounts, nr, criterion)) / m
                if score < best_score:
                    best_score = score
                    best_f = f
                    t = 0.5 * (v0 + v1)
                    best_t = t if t < v1 else v0
        if best_f < 0:
            continue

        # partition idx[start:end] so rows going left come first
        lo, hi = start, end - 1
        while lo <= hi:
            if X[idx[lo], best_f] <= best_t:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = n_nodes + 1, lo, end, depth + 1
        top += 1
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = n_nodes, start, lo, depth + 1
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def _tree_leaf_values(X, feature, threshold, left, right, value):
    out = np.empty((X.shape[0], value.shape[1]))
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        total = value[node].sum()
        for k in range(value.shape[1]):
            out[i, k] = value[node, k] / total
    return out


def _max_features(spec, d: int) -> int:
    if spec in (None, "all"):
        return d
    if spec == "sqrt":
        return max(1, int(math.floor(math.sqrt(d))))
    if spec == "log2":
        return max(1, int(math.floor(math.log2(d)))) if d > 1 else 1
    return max(1, min(d, int(spec)))


def _tree_dict(arrs) -> dict:
    feature, threshold, left, right, value = arrs
    return {"feature": feature, "threshold": threshold, "left": left, "right": right, "value": value}


def _grow(hp, X, y, rows, K, seed) -> dict:
    criterion = _GINI if hp.get("criterion", "gini") == "gini" else _ENTROPY
    return _tree_dict(_grow_tree(X, y, rows.astype(np.int64), K, criterion, int(hp["max_depth"]),
                                 int(hp.get("min_samples_split", 2)),
                                 _max_features(hp.get("max_features"), X.shape[1]), int(seed)))


def _tree_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def _fit_dtree(hp, X, y, K, seed):
    rng = np.random.default_rng(seed)
    tree = _grow(hp, X, y, np.arange(len(X)), K, _tree_seed(rng))
    return FittedModel("dtree", K, dict(hp), {"trees": [tree]}, seed)


def _fit_rforest(hp, X, y, K, seed):
    # tree i draws its bootstrap rows, then its seed, from one stream; with
    # bootstrap off and one tree this matches dtree under the same seed
    rng = np.random.default_rng(seed)
    n = len(X)
    trees = []
    for _ in range(int(hp["n_estimators"])):
        rows = rng.integers(0, n, size=n) if hp.get("bootstrap", True) else np.arange(n)
        trees.append(_grow(hp, X, y, rows, K, _tree_seed(rng)))
    return FittedModel("rforest", K, dict(hp), {"trees": trees}, seed)


def _proba_trees(m, X):
    acc = np.zeros((len(X), m.n_classes))
    for t in m.params["trees"]:
        acc += _tree_leaf_values(X, t["feature"], t["threshold"], t["left"], t["right"], t["value"])
    return acc / len(m.params["trees"])


def tree_depth(tree: dict) -> int:
    """Depth of a fitted tree (a lone root has depth 0)."""
    left, right = tree["left"], tree["right"]
    depth = np.zeros(len(left), dtype=np.int64)
    for node in range(len(left)):
        if left[node] >= 0:
            depth[left[node]] = depth[right[node]] = depth[node] + 1
    return int(depth.max())


_FIT = {"logreg": _fit_logreg, "gnb": _fit_gnb, "knn": _fit_knn,
        "dtree": _fit_dtree, "rforest": _fit_rforest}
_PROBA = {"logreg": _proba_logreg, "gnb": _proba_gnb, "knn": _proba_knn,
          "dtree": _proba_trees, "rforest": _proba_trees}
