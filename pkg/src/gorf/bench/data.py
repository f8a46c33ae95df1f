"""Datasets: libsvm text I/O, bundled fixtures and input normalization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import DataError, DimensionMismatchError, ParseError

__all__ = [
    "Dataset",
    "load_libsvm",
    "save_libsvm",
    "load_fixture",
    "FIXTURES",
    "UnitBoxScaler",
    "normalize_unit_box",
    "project_sphere",
    "subsample",
]

FIXTURES = {
    "digits16": ("digits16.libsvm", "classify"),
    "housing": ("housing.libsvm", "regress"),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = "classify"
    split: str = "train"
    path: str | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError(f"inconsistent shapes X{self.X.shape} y{self.y.shape}")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise DataError("dataset contains non-finite values")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def take(self, idx, split=None):
        return replace(self, X=self.X[idx], y=self.y[idx], split=split or self.split)


def _parse_lines(lines, source):
    labels, rows = [], []
    width = 0
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r} in {source}", lineno) from None
        entries = {}
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                j = int(idx)
                v = float(val)
            except ValueError:
                raise ParseError(f"malformed token {tok!r} in {source}", lineno) from None
            if j < 1:
                raise ParseError(f"feature index {j} is not 1-based in {source}", lineno)
            entries[j] = v
            width = max(width, j)
        rows.append(entries)
    return labels, rows, width


def load_libsvm(path, n_features=None, task="auto"):
    """Read ``label idx:val ...`` lines into a dense dataset.

    Missing indices are zero. ``task="auto"`` picks classification when all
    labels are integers and regression otherwise.
    """
    with open(path) as fh:
        labels, rows, width = _parse_lines(fh, path)
    if not rows:
        raise DataError(f"{path} contains no samples")
    if n_features is None:
        n_features = width
    elif width > n_features:
        raise DimensionMismatchError(
            f"{path} uses feature index {width} but the dimension is {n_features}"
        )
    X = np.zeros((len(rows), n_features))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            X[i, j - 1] = v
    y = np.asarray(labels)
    if task == "auto":
        task = "classify" if np.all(y == np.round(y)) else "regress"
    if task == "classify":
        y = y.astype(np.int64)
    return Dataset(X, y, task=task, path=str(path))


def save_libsvm(dataset, path):
    """Write nonzero entries with round-trip float formatting."""
    with open(path, "w") as fh:
        for xi, yi in zip(dataset.X, dataset.y):
            label = str(int(yi)) if dataset.task == "classify" else repr(float(yi))
            feats = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(xi) if v != 0]
            fh.write(" ".join([label] + feats) + "\n")


def load_fixture(name):
    """Load a bundled dataset: ``digits16`` (classification) or ``housing``."""
    try:
        filename, task = FIXTURES[name]
    except KeyError:
        raise DataError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    ref = resources.files("gorf") / "data" / filename
    with resources.as_file(ref) as p:
        return load_libsvm(p, task=task)


class UnitBoxScaler(TransformerMixin, BaseEstimator):
    """Map each coordinate to ``[0, 1]`` with training min and max.

    Transformed values are clipped to ``[0, 1]``; constant coordinates map to 0.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.min_ = X.min(axis=0)
        self.range_ = X.max(axis=0) - self.min_
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "min_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError("column count differs from the fitted data")
        safe = np.where(self.range_ > 0, self.range_, 1.0)
        out = np.clip((X - self.min_) / safe, 0.0, 1.0)
        out[:, self.range_ == 0] = 0.0
        return out


def normalize_unit_box(train, test=None):
    """Box-normalize ``train`` (and ``test`` with the train statistics)."""
    scaler = UnitBoxScaler().fit(train.X)
    out = replace(train, X=scaler.transform(train.X))
    if test is None:
        return out
    return out, replace(test, X=scaler.transform(test.X))


def project_sphere(data):
    """Scale every row to unit norm. Accepts a Dataset or an array."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DataError(f"{int(np.sum(norms == 0))} zero row(s) cannot be projected to the sphere")
    Y = X / norms[:, None]
    return replace(data, X=Y) if isinstance(data, Dataset) else Y


def subsample(dataset, size, rng):
    """Rows chosen uniformly without replacement (all rows if ``size >= n``)."""
    if size is None or size >= dataset.n:
        return dataset
    if size < 1:
        raise ValueError("subsample size must be positive")
    idx = np.sort(rng.choice(dataset.n, size=size, replace=False))
    return dataset.take(idx)
