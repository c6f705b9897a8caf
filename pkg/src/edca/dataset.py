"""Typed tabular datasets: CSV loading, synthetic fixtures and row splits.

Columns are stored as numpy arrays. Number columns are ``float64`` with ``nan``
marking a missing cell; Text columns are ``object`` arrays with ``None`` for
missing cells. Datasets are treated as immutable: the arrays are flagged
read-only, and every subset operation returns a new object.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MISSING_TOKENS = frozenset({"", "?", "NA"})


class DataError(ValueError):
    """Raised when a dataset cannot be loaded, built or split."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    values: np.ndarray
    is_text: bool

    @classmethod
    def numbers(cls, name: str, values: Iterable) -> "Column":
        arr = np.array([np.nan if v is None else float(v) for v in values], dtype=np.float64)
        return cls(name, _frozen(arr), False)

    @classmethod
    def texts(cls, name: str, values: Iterable) -> "Column":
        vals = [None if v is None else str(v) for v in values]
        arr = np.empty(len(vals), dtype=object)
        arr[:] = vals
        return cls(name, _frozen(arr), True)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def missing(self) -> np.ndarray:
        if self.is_text:
            return np.array([v is None for v in self.values], dtype=bool)
        return np.isnan(self.values)

    def cells(self) -> list:
        """Cells as Python values, ``None`` for Missing."""
        if self.is_text:
            return list(self.values)
        return [None if math.isnan(v) else float(v) for v in self.values]

    def take(self, idx: np.ndarray) -> "Column":
        return Column(self.name, _frozen(self.values[idx]), self.is_text)

    def same_cells(self, other: "Column") -> bool:
        return self.name == other.name and self.is_text == other.is_text and self.cells() == other.cells()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature columns plus an integer-coded class target."""

    columns: tuple[Column, ...]
    target: np.ndarray
    label_names: tuple[str, ...]
    target_name: str = "target"
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        tgt = np.asarray(self.target, dtype=np.int64)
        object.__setattr__(self, "target", _frozen(tgt.copy()))
        self._by_name.clear()
        for c in self.columns:
            if c.name in self._by_name:
                raise DataError(f"duplicate column name {c.name!r}")
            if len(c) != len(tgt):
                raise DataError(f"column {c.name!r} has {len(c)} cells, expected {len(tgt)}")
            self._by_name[c.name] = c
        if len(tgt) and (tgt.min() < 0 or tgt.max() >= len(self.label_names)):
            raise DataError("target labels outside [0, K)")

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        try:
            return self._by_name[name]
        except KeyError:
            raise DataError(f"no column named {name!r}") from None

    def has_column(self, name: str) -> bool:
        return name in self._by_name

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Row subset in the given order; class set and label names are kept."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(tuple(c.take(idx) for c in self.columns), self.target[idx],
                       self.label_names, self.target_name)

    def validate(self) -> "Dataset":
        """Check the invariants required of a loaded (not sub-sampled) dataset."""
        if self.n_classes < 2:
            raise DataError("fewer than 2 classes")
        counts = np.bincount(self.target, minlength=self.n_classes)
        if (counts == 0).any():
            raise DataError("some class labels have no rows")
        for c in self.columns:
            if len(c) and c.missing.all():
                raise DataError(f"column {c.name!r} has all cells missing")
        return self

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.target, minlength=self.n_classes)

    def same_cells(self, other: "Dataset") -> bool:
        return (self.label_names == other.label_names
                and np.array_equal(self.target, other.target)
                and len(self.columns) == len(other.columns)
                and all(a.same_cells(b) for a, b in zip(self.columns, other.columns)))


# ---------------------------------------------------------------------------
# CSV


def _parse_number(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _build_column(name: str, raw: list[str | None]) -> Column:
    present = [t for t in raw if t is not None]
    if not present:
        raise DataError(f"column {name!r} has all cells missing")
    parsed = [_parse_number(t) for t in present]
    n_num = sum(p is not None for p in parsed)
    if n_num == len(present):
        return Column.numbers(name, [None if t is None else _parse_number(t) for t in raw])
    if n_num == 0:
        return Column.texts(name, raw)
    bad = next(t for t, p in zip(present, parsed) if p is None)
    raise DataError(f"column {name!r} mixes numbers and text (e.g. {bad!r})")


def load_csv(path: str | Path, target_column: str,
             missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> Dataset:
    """Load a headered CSV file into a typed :class:`Dataset`.

    Cells whose whitespace-trimmed text is in ``missing_tokens`` become Missing.
    A column is Number-typed when every non-missing cell parses as a finite float,
    Text-typed when none do; anything in between is rejected. Target labels are
    indexed in lexicographic order of their original strings.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    tokens = {t.strip() for t in missing_tokens}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if target_column not in header:
            raise DataError(f"target column {target_column!r} not in header")
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    width = len(header)
    cols: list[list[str | None]] = [[] for _ in range(width)]
    for lineno, row in enumerate(rows, start=2):
        if len(row) != width:
            raise DataError(f"row {lineno} has {len(row)} fields, header has {width}")
        for j, cell in enumerate(row):
            t = cell.strip()
            cols[j].append(None if t in tokens else t)

    t_idx = header.index(target_column)
    raw_target = cols[t_idx]
    if any(t is None for t in raw_target):
        raise DataError("target column has missing values")
    label_names = tuple(sorted(set(raw_target)))
    if len(label_names) < 2:
        raise DataError("fewer than 2 classes")
    lookup = {lab: i for i, lab in enumerate(label_names)}
    target = np.array([lookup[t] for t in raw_target], dtype=np.int64)
    columns = tuple(_build_column(header[j], cols[j]) for j in range(width) if j != t_idx)
    return Dataset(columns, target, label_names, target_column).validate()


def _format_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_csv(ds: Dataset, path: str | Path,
              missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> None:
    """Write ``ds`` so that :func:`load_csv` with the same tokens reproduces it."""
    tokens = sorted(t.strip() for t in missing_tokens)
    if not tokens:
        raise DataError("cannot write missing cells without a missing token")
    miss = "" if "" in tokens else tokens[0]
    header = ds.feature_names + [ds.target_name]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cells = [c.cells() for c in ds.columns]
        for i in range(ds.n_rows):
            row = []
            for c, col_cells in zip(ds.columns, cells):
                v = col_cells[i]
                if v is None:
                    row.append(miss)
                else:
                    row.append(v if c.is_text else _format_number(v))
            row.append(ds.label_names[ds.target[i]])
            w.writerow(row)


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True, eq=False)
class SplitPair:
    train_indices: np.ndarray
    val_indices: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, SplitPair)
                and np.array_equal(self.train_indices, other.train_indices)
                and np.array_equal(self.val_indices, other.val_indices))


def _pair(n: int, val: np.ndarray) -> SplitPair:
    mask = np.zeros(n, dtype=bool)
    mask[val] = True
    return SplitPair(_frozen(np.flatnonzero(~mask)), _frozen(np.flatnonzero(mask)))


def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` proportional to ``counts``."""
    quota = counts * (total / counts.sum())
    alloc = np.floor(quota).astype(np.int64)
    rem = quota - alloc
    for i in np.argsort(-rem, kind="stable")[: total - alloc.sum()]:
        alloc[i] += 1
    return alloc


def split_holdout(ds: Dataset, val_fraction: float = 0.25, stratified: bool = True,
                  seed: int = 0) -> SplitPair:
    """Train/validation split; ``|val| = round(val_fraction * n_rows)``."""
    if not 0.0 < val_fraction < 1.0:
        raise DataError("val_fraction must be in (0, 1)")
    n = ds.n_rows
    rng = np.random.default_rng(seed)
    n_val = int(round(val_fraction * n))
    if not stratified:
        if n_val < 1 or n_val > n - 1:
            raise DataError(f"val_fraction {val_fraction} leaves an empty part for {n} rows")
        return _pair(n, rng.permutation(n)[:n_val])

    counts = ds.class_counts()
    present = np.flatnonzero(counts)
    if (counts[present] < 2).any():
        raise DataError("a class has fewer than 2 rows; cannot stratify")
    alloc = np.zeros_like(counts)
    alloc[present] = _allocate(counts[present], n_val)
    alloc[present] = np.clip(alloc[present], 1, counts[present] - 1)
    val = []
    for c in present:
        members = np.flatnonzero(ds.target == c)
        val.append(rng.permutation(members)[: alloc[c]])
    return _pair(n, np.concatenate(val))


def kfold(ds: Dataset, k: int = 5, stratified: bool = True, seed: int = 0) -> list[SplitPair]:
    """K train/test pairs whose test parts partition the rows.

    Rows are shuffled within each class, the classes are laid end to end and
    dealt round-robin into the folds, so each class is split as evenly as
    possible and fold sizes differ by at most one.
    """
    n = ds.n_rows
    if k < 2:
        raise DataError("k must be at least 2")
    if k > n:
        raise DataError(f"k={k} exceeds the {n} available rows")
    rng = np.random.default_rng(seed)
    if stratified:
        counts = ds.class_counts()
        if ((counts > 0) & (counts < k)).any():
            raise DataError(f"a class has fewer than k={k} rows; cannot stratify")
        order = np.concatenate([rng.permutation(np.flatnonzero(ds.target == c))
                                for c in range(ds.n_classes) if counts[c]])
    else:
        order = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    return [_pair(n, np.flatnonzero(fold_of == f)) for f in range(k)]


# ---------------------------------------------------------------------------
# synthetic fixtures


@dataclass(frozen=True)
class SyntheticSpec:
    n_rows: int = 600
    n_numerical: int = 6
    n_categorical: int = 3
    n_binary: int = 1
    with_identifier: bool = True
    missing_rate: float = 0.05
    n_classes: int = 3
    class_sep: float = 2.0
    n_noise: int = 0
    n_levels: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown synthetic spec keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    """Build a classification fixture that exercises every analyzer branch.

    Informative numerical features are Gaussian around per-class centres scaled
    by ``class_sep``; ``n_noise`` extra numerical features carry no signal.
    Categorical features are text levels biased toward a class-specific level,
    binary features are ``"no"/"yes"`` with a class-dependent rate.
    """
    s = spec
    for name in ("n_rows", "n_numerical", "n_categorical", "n_binary", "n_noise"):
        if getattr(s, name) < 0:
            raise DataError(f"{name} must be non-negative")
    if s.n_numerical + s.n_noise + s.n_categorical + s.n_binary + int(s.with_identifier) == 0:
        raise DataError("zero feature columns requested")
    if not 0.0 <= s.missing_rate < 1.0:
        raise DataError("missing_rate must be in [0, 1)")
    if s.n_classes < 2:
        raise DataError("n_classes must be at least 2")
    if s.n_rows < s.n_classes:
        raise DataError("need at least one row per class")
    if s.n_levels < 3:
        raise DataError("n_levels must be at least 3 so categorical columns are not binary")

    rng = np.random.default_rng(seed)
    n, K = s.n_rows, s.n_classes
    y = rng.permutation(np.arange(n) % K)
    width = len(str(K - 1))
    label_names = tuple(f"c{k:0{width}d}" for k in range(K))

    def holes(values: list) -> list:
        if s.missing_rate == 0:
            return values
        drop = rng.random(n) < s.missing_rate
        if drop.all():
            drop[0] = False
        return [None if d else v for v, d in zip(values, drop)]

    columns: list[Column] = []
    if s.with_identifier:
        columns.append(Column.numbers("id", rng.permutation(n) + 1000))
    centres = rng.normal(0.0, s.class_sep, size=(K, s.n_numerical))
    for j in range(s.n_numerical):
        x = centres[y, j] + rng.normal(size=n)
        columns.append(Column.numbers(f"num{j}", holes(list(x))))
    for j in range(s.n_noise):
        x = rng.normal(size=n)
        columns.append(Column.numbers(f"noise{j}", holes(list(x))))
    for j in range(s.n_categorical):
        preferred = (y + j) % s.n_levels
        uniform = rng.integers(s.n_levels, size=n)
        lvl = np.where(rng.random(n) < 0.5, preferred, uniform)
        columns.append(Column.texts(f"cat{j}", holes([f"v{v}" for v in lvl])))
    for j in range(s.n_binary):
        p_yes = 0.25 + 0.5 * ((y + j) % 2)
        yes = rng.random(n) < p_yes
        yes[:2] = [True, False]  # both values must occur
        columns.append(Column.texts(f"bin{j}", holes(["yes" if b else "no" for b in yes])))
    return Dataset(tuple(columns), y, label_names, "class").validate()
