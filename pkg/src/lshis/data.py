"""Datasets, CSV ingestion, standardization, toy generators and fold plans."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

STD_FLOOR = 1e-12


class DataError(ValueError):
    """Base class for ingestion and dataset validation failures."""


class EmptyFileError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class NonNumericError(DataError):
    pass


class TooManyClassesError(DataError):
    pass


class ClassTieError(DataError):
    """Both classes have the same count, so there is no minority class."""


class FoldError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Dense binary-labelled dataset.

    ``labels`` are encoded as 0/1. ``minority_class`` is the global minority
    label; sub-views produced by :meth:`subset` keep the parent's value even
    when they contain a single class.
    """

    features: np.ndarray
    labels: np.ndarray
    minority_class: int
    feature_names: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ("0", "1")

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if X.shape[0] < 1:
            raise DataError("dataset has no rows")
        if y.shape != (X.shape[0],):
            raise DataError("labels must be a vector with one entry per row")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or Inf")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be encoded as 0/1")
        if self.minority_class not in (0, 1):
            raise DataError("minority_class must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @classmethod
    def from_arrays(cls, features, labels, feature_names: Sequence[str] = (),
                    class_names: Sequence[str] = ("0", "1")) -> "Dataset":
        """Build a dataset and derive the minority class from the label counts."""
        y = np.asarray(labels, dtype=np.int64)
        return cls(features, y, minority_from_counts(y), tuple(feature_names), tuple(class_names))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def majority_class(self) -> int:
        return 1 - self.minority_class

    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.labels, minlength=2)
        return {0: int(counts[0]), 1: int(counts[1])}

    @property
    def ir(self) -> float:
        counts = self.class_counts()
        n_min = counts[self.minority_class]
        if n_min == 0:
            return math.inf
        return counts[self.majority_class] / n_min

    def minority_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == self.minority_class)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.minority_class,
                       self.feature_names, self.class_names)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.minority_class,
                       self.feature_names, self.class_names)

    def summary(self, folds: Optional["FoldPlan"] = None) -> dict:
        counts = self.class_counts()
        out = {
            "n_rows": self.n_rows,
            "n_features": self.n_features,
            "class_counts": {self.class_names[c]: n for c, n in counts.items()},
            "minority_class": self.class_names[self.minority_class],
            "ir": self.ir,
        }
        if folds is not None:
            out["fold_assignments"] = folds.assignments.tolist()
        return out

    def to_csv(self, path, label_column: str = "class") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, label_column])
            for row, lab in zip(self.features, self.labels):
                writer.writerow([*(repr(float(v)) for v in row), self.class_names[lab]])


def minority_from_counts(labels: np.ndarray) -> int:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=2)
    if counts[0] == counts[1]:
        raise ClassTieError("class counts are tied; minority class is undefined")
    return int(np.argmin(counts))


def load_csv(path, label_column: Optional[str] = None) -> Dataset:
    """Read a comma-separated file with a header row.

    Labels may be arbitrary strings; they are encoded by first-seen order.
    When ``label_column`` is None the last column is used.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFileError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column is None:
            label_column = header[-1]
        if label_column not in header:
            raise MissingColumnError(f"{path}: label column {label_column!r} not found")
        li = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != li]
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for i, cell in enumerate(rec):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {header[i]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise NonNumericError(f"{path}:{lineno}: non-finite value in column {header[i]!r}")
                vals.append(v)
            rows.append(vals)
            raw_labels.append(rec[li].strip())
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    names: list[str] = []
    for lab in raw_labels:
        if lab not in names:
            names.append(lab)
    if len(names) > 2:
        raise TooManyClassesError(f"{path}: more than two classes ({len(names)} found)")
    if len(names) < 2:
        raise DataError(f"{path}: only one class present")
    code = {name: i for i, name in enumerate(names)}
    y = np.array([code[lab] for lab in raw_labels], dtype=np.int64)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return Dataset(X, y, minority_from_counts(y), tuple(feature_names), tuple(names))


def bundled_path(name: str) -> Path:
    """Path of a CSV shipped with the package (currently ``pageblocks``)."""
    p = Path(__file__).parent / "datasets" / f"{name}.csv"
    if not p.exists():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return p


def load_pageblocks() -> Dataset:
    return load_csv(bundled_path("pageblocks"), "class")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.std + self.mean


def fit_standardizer(d: Dataset) -> Standardizer:
    """Per-feature z-score using the population standard deviation.

    Features whose std falls below ``STD_FLOOR`` are only centered.
    """
    if d.n_rows < 2:
        raise DataError("need at least 2 rows to fit a standardizer")
    mean = d.features.mean(axis=0)
    std = d.features.std(axis=0)
    scale = np.where(std < STD_FLOOR, 1.0, std)
    return Standardizer(mean, scale)


def apply_standardizer(s: Standardizer, d: Dataset) -> Dataset:
    return d.with_features(s.transform(d.features))


def _generator_counts(n_minority: int, ir: float) -> tuple[int, int]:
    if n_minority < 1:
        raise DataError("n_minority must be >= 1")
    if ir < 1:
        raise DataError("ir must be >= 1")
    n_major = int(math.floor(n_minority * ir + 0.5))
    if n_major == n_minority:
        n_major += 1
    return n_minority, n_major


def _toy(points_min: np.ndarray, points_maj: np.ndarray, noise: float,
         rng: np.random.Generator) -> Dataset:
    X = np.vstack([points_maj, points_min])
    X = X + rng.normal(scale=noise, size=X.shape) if noise > 0 else X
    y = np.concatenate([np.zeros(len(points_maj), np.int64), np.ones(len(points_min), np.int64)])
    return Dataset(X, y, 1, ("x0", "x1"), ("majority", "minority"))


def make_half_circles(n_minority: int, ir: float, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved unit semicircles; the minority sits on the lower,
    shifted arc (offset (1, 0.5))."""
    n_min, n_maj = _generator_counts(n_minority, ir)
    rng = np.random.default_rng(seed)
    t_maj = rng.uniform(0.0, math.pi, n_maj)
    t_min = rng.uniform(0.0, math.pi, n_min)
    maj = np.column_stack([np.cos(t_maj), np.sin(t_maj)])
    mino = np.column_stack([1.0 - np.cos(t_min), 0.5 - np.sin(t_min)])
    return _toy(mino, maj, noise, rng)


def make_inner_circles(n_minority: int, ir: float, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Concentric circles; the minority is the inner circle of radius 0.5."""
    n_min, n_maj = _generator_counts(n_minority, ir)
    rng = np.random.default_rng(seed)
    t_maj = rng.uniform(0.0, 2 * math.pi, n_maj)
    t_min = rng.uniform(0.0, 2 * math.pi, n_min)
    maj = np.column_stack([np.cos(t_maj), np.sin(t_maj)])
    mino = 0.5 * np.column_stack([np.cos(t_min), np.sin(t_min)])
    return _toy(mino, maj, noise, rng)


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        a = np.asarray(self.assignments, dtype=np.int64).copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        return self.train_indices(fold), self.test_indices(fold)

    def to_json(self) -> str:
        return json.dumps({"n_folds": self.n_folds, "seed": self.seed,
                           "fold_assignments": self.assignments.tolist()})


def plan_folds(d: Dataset, n_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified fold assignment.

    Each class is shuffled and dealt round-robin; the majority deal starts
    where the minority deal stopped so that fold sizes differ by at most one.
    """
    if n_folds < 2:
        raise FoldError("n_folds must be >= 2")
    counts = d.class_counts()
    for c, n in counts.items():
        if n < n_folds:
            raise FoldError(
                f"class {d.class_names[c]!r} has {n} instances, fewer than {n_folds} folds"
            )
    rng = np.random.default_rng(seed)
    assignments = np.empty(d.n_rows, dtype=np.int64)
    start = 0
    for c in (d.minority_class, d.majority_class):
        idx = rng.permutation(np.flatnonzero(d.labels == c))
        assignments[idx] = (start + np.arange(len(idx))) % n_folds
        start = (start + len(idx)) % n_folds
    return FoldPlan(n_folds, assignments, seed)


def stratified_subsample(d: Dataset, fraction: float, seed: int = 0) -> np.ndarray:
    """Sorted row indices keeping ``round(fraction * count)`` rows of each class."""
    if not 0 < fraction <= 1:
        raise DataError("fraction must be in (0, 1]")
    if fraction == 1:
        return np.arange(d.n_rows)
    rng = np.random.default_rng(seed)
    keep = []
    for c in (0, 1):
        idx = np.flatnonzero(d.labels == c)
        n = max(1, int(math.floor(fraction * len(idx) + 0.5))) if len(idx) else 0
        keep.append(rng.permutation(idx)[:n])
    return np.sort(np.concatenate(keep))
