"""Matthews correlation, the fitness mapping and data-usage accounting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with entry (i, j) = rows of true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def mcc(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation coefficient of a confusion matrix.

    ``(c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))`` with
    ``c`` the trace, ``s`` the total, ``p`` column sums and ``t`` row sums.
    Returns 0 when the denominator vanishes (a constant predictor or target).
    """
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    if s < 1:
        raise ValueError("confusion matrix is empty")
    c = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    num = c * s - p @ t
    den = math.sqrt(s * s - p @ p) * math.sqrt(s * s - t @ t)
    if den == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, num / den)))


def mcc_score(y_true, y_pred, n_classes: int) -> float:
    return mcc(confusion_matrix(y_true, y_pred, n_classes))


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred))) if len(y_true) else 0.0


def fitness_from_mcc(mcc_val: float) -> float:
    """Map MCC in [-1, 1] to a minimised error in [0, 1]; 0 is a perfect score."""
    if not -1.0 <= mcc_val <= 1.0:
        raise ValueError(f"MCC {mcc_val} outside [-1, 1]")
    return (1.0 - mcc_val) / 2.0


@dataclass(frozen=True)
class UsageReport:
    pct_instances: float
    pct_features: float

    @property
    def pct_data(self) -> float:
        return self.pct_instances * self.pct_features

    def to_dict(self) -> dict:
        return {"pct_instances": self.pct_instances, "pct_features": self.pct_features,
                "pct_data": self.pct_data}


def data_usage(genome, max_instances: int, max_features: int,
               reference_instances: int | None = None) -> UsageReport:
    """Fraction of instances and features the genome trains on.

    Rows used are ``|is_gene|`` (all ``max_instances`` rows when absent). They
    are divided by ``reference_instances`` when given: the harness passes the
    outer training-fold size there, so validation rows count against usage.
    """
    rows = max_instances if genome.is_gene is None else len(genome.is_gene)
    feats = max_features if genome.fs_gene is None else len(genome.fs_gene)
    denom = max_instances if reference_instances is None else reference_instances
    if denom <= 0 or max_features <= 0:
        raise ValueError("usage denominators must be positive")
    return UsageReport(rows / denom, feats / max_features)


class DRMode(str, enum.Enum):
    NONE = "None"
    IS_ONLY = "IS-only"
    FS_ONLY = "FS-only"
    IS_FS = "IS+FS"


def dr_mode(genome) -> DRMode:
    has_is, has_fs = genome.is_gene is not None, genome.fs_gene is not None
    if has_is and has_fs:
        return DRMode.IS_FS
    if has_is:
        return DRMode.IS_ONLY
    if has_fs:
        return DRMode.FS_ONLY
    return DRMode.NONE


def dr_histogram(genomes) -> dict[DRMode, int]:
    counts = {m: 0 for m in DRMode}
    for g in genomes:
        counts[dr_mode(g)] += 1
    return counts
