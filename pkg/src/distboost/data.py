"""Tabular data ingestion, categorical encoding and train/test splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadFraction,
    DataError,
    EmptyDataset,
    MissingColumn,
    MissingValue,
    NonNumericValue,
    WidthMismatch,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: str = NUMERIC
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise DataError(f"categorical feature {self.name!r} has no categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"duplicate categories in feature {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.categories:
            out["categories"] = list(self.categories)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMeta":
        return cls(d["name"], d.get("kind", NUMERIC), tuple(d.get("categories", ())))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-major feature matrix plus response.

    Categorical columns hold integer codes into ``meta[j].categories`` until
    they are replaced by target statistics (see :class:`EncoderState`).
    ``response`` is ``None`` for feature-only data read for prediction.
    """

    features: np.ndarray
    response: np.ndarray | None
    meta: tuple[FeatureMeta, ...]
    weights: np.ndarray | None = None
    encoded: bool = False

    def __post_init__(self):
        X = np.asfortranarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if X.shape[1] != len(self.meta):
            raise WidthMismatch(f"{X.shape[1]} feature columns but {len(self.meta)} metadata entries")
        names = [m.name for m in self.meta]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise MissingValue("features contain NaN or infinite values")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "meta", tuple(self.meta))
        if self.response is not None:
            y = np.array(self.response, dtype=float)
            if y.shape != (X.shape[0],):
                raise WidthMismatch("response length must equal the number of rows")
            if not np.all(np.isfinite(y)):
                raise MissingValue("response contains NaN or infinite values")
            y.setflags(write=False)
            object.__setattr__(self, "response", y)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            if w.shape != (X.shape[0],):
                raise WidthMismatch("weights length must equal the number of rows")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DataError("weights must be finite and strictly positive")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [m.name for m in self.meta]

    def column_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise MissingColumn(f"no feature named {name!r}") from None

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(
            self.features[rows],
            None if self.response is None else self.response[rows],
            self.meta,
            None if self.weights is None else self.weights[rows],
            self.encoded,
        )

    def replace_features(self, features: np.ndarray, *, encoded: bool | None = None) -> "Dataset":
        return Dataset(
            features,
            self.response,
            self.meta,
            self.weights,
            self.encoded if encoded is None else encoded,
        )


def from_arrays(
    X: np.ndarray,
    y: np.ndarray | None = None,
    names: Sequence[str] | None = None,
    weights: np.ndarray | None = None,
) -> Dataset:
    """Wrap an all-numeric matrix as a :class:`Dataset`."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    meta = tuple(FeatureMeta(str(n)) for n in names)
    return Dataset(X, y, meta, weights, encoded=True)


def _parse_float(token: str, column: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise NonNumericValue(f"column {column!r}, line {line}: cannot parse {token!r} as a number") from None
    if not math.isfinite(value):
        raise NonNumericValue(f"column {column!r}, line {line}: non-finite value {token!r}")
    return value


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}, line {i + 2}: expected {len(header)} fields, found {len(r)}")
    return header, rows


def load_csv(
    path: str | Path,
    response_col: str | None,
    categorical_cols: Iterable[str] = (),
    weight_col: str | None = None,
    feature_cols: Sequence[str] | None = None,
) -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    Every column other than the response and weight column becomes a feature
    unless ``feature_cols`` restricts (and orders) them. Declared categorical
    columns are stored as integer codes into their sorted category labels.
    Empty cells are rejected.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    categorical = set(categorical_cols)
    for col in [response_col, weight_col, *categorical, *(feature_cols or [])]:
        if col is not None and col not in header:
            raise MissingColumn(f"{path}: column {col!r} not found (available: {', '.join(header)})")
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")

    for i, r in enumerate(rows):
        for j, cell in enumerate(r):
            if cell.strip() == "":
                raise MissingValue(f"{path}, line {i + 2}: empty cell in column {header[j]!r}")

    if feature_cols is None:
        feature_cols = [c for c in header if c not in (response_col, weight_col)]
    pos = {c: j for j, c in enumerate(header)}

    def numeric(col):
        j = pos[col]
        return np.array([_parse_float(r[j].strip(), col, i + 2) for i, r in enumerate(rows)])

    columns, meta = [], []
    for col in feature_cols:
        if col in categorical:
            labels = [r[pos[col]].strip() for r in rows]
            cats = tuple(sorted(set(labels)))
            code = {c: k for k, c in enumerate(cats)}
            columns.append(np.array([code[v] for v in labels], dtype=float))
            meta.append(FeatureMeta(col, CATEGORICAL, cats))
        else:
            columns.append(numeric(col))
            meta.append(FeatureMeta(col))

    n = len(rows)
    X = np.column_stack(columns) if columns else np.empty((n, 0))
    y = numeric(response_col) if response_col is not None else None
    w = numeric(weight_col) if weight_col is not None else None
    return Dataset(X, y, tuple(meta), w, encoded=not categorical.intersection(feature_cols))


@dataclass
class EncoderState:
    """Per-column smoothed target statistics learned on training data."""

    smoothing: float
    global_mean: float
    values: dict[str, dict[str, float]] = field(default_factory=dict)

    def transform(self, data: Dataset) -> Dataset:
        """Replace categorical codes with the learned statistics.

        Labels never seen during training map to the global mean.
        """
        if data.encoded:
            return data
        X = np.array(data.features, order="F")
        for j, m in enumerate(data.meta):
            if not m.is_categorical:
                continue
            table = self.values.get(m.name, {})
            lookup = np.array([table.get(c, self.global_mean) for c in m.categories])
            X[:, j] = lookup[data.features[:, j].astype(np.intp)]
        return data.replace_features(X, encoded=True)

    def to_dict(self) -> dict:
        return {"smoothing": self.smoothing, "global_mean": self.global_mean, "values": self.values}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderState":
        return cls(float(d["smoothing"]), float(d["global_mean"]), {k: dict(v) for k, v in d["values"].items()})


def encode_categoricals(train: Dataset, smoothing: float = 1.0) -> tuple[Dataset, EncoderState]:
    """Fit smoothed target statistics on ``train`` and apply them.

    A category seen ``n_c`` times with response mean ``m_c`` is encoded as
    ``(m_c * n_c + global_mean * s) / (n_c + s)``.
    """
    if not smoothing > 0:
        raise DataError("smoothing must be positive")
    if train.response is None:
        raise DataError("encoding requires a response")
    y = train.response
    state = EncoderState(float(smoothing), float(np.mean(y)))
    if train.encoded:
        return train, state
    for j, m in enumerate(train.meta):
        if not m.is_categorical:
            continue
        codes = train.features[:, j].astype(np.intp)
        counts = np.bincount(codes, minlength=len(m.categories))
        sums = np.bincount(codes, weights=y, minlength=len(m.categories))
        state.values[m.name] = {
            c: float((sums[k] + state.global_mean * smoothing) / (counts[k] + smoothing))
            for k, c in enumerate(m.categories)
            if counts[k] > 0
        }
    return state.transform(train), state


def split_train_test(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split; the training part gets ceil(n * (1 - f)) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise BadFraction(f"test fraction must lie in (0, 1), got {test_fraction}")
    n = data.n_rows
    if n < 2:
        raise DataError("need at least two rows to split")
    target = n * (1.0 - test_fraction)
    # snap float noise like 3.0000000000000004 before taking the ceiling
    target = round(target) if abs(target - round(target)) < 1e-9 else target
    n_train = min(max(math.ceil(target), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence[np.ndarray | Sequence]) -> None:
    """Write equal-length columns to CSV using shortest round-trip float repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)
