"""Classifiers, confusion-matrix metrics and the cross-validation driver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, FoldPlan, apply_standardizer, fit_standardizer, plan_folds
from .lsh import bucketize
from .pipeline import SelectionConfig
from .sampling import run_selection

TREE_GRID = (10, 25, 50)
DEPTH_GRID = (10, 20, 30)
METRIC_NAMES = ("se", "sp", "gmean", "bacc", "f1")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred, positive: int) -> "ConfusionCounts":
        t = np.asarray(y_true) == positive
        p = np.asarray(y_pred) == positive
        return cls(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)), int(np.sum(t & ~p)))


@dataclass(frozen=True)
class MetricsReport:
    se: float
    sp: float
    gmean: float
    bacc: float
    f1: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def compute_metrics(c: ConfusionCounts) -> MetricsReport:
    """Se/Sp/Gmean/BAcc/F1 with the minority class as positive.

    Se = TP/(TP+FN) and Sp = TN/(TN+FP).
    """
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise MetricError("cannot score: a class is missing from the test rows")
    se = c.tp / (c.tp + c.fn)
    sp = c.tn / (c.tn + c.fp)
    return MetricsReport(se, sp, math.sqrt(se * sp), (se + sp) / 2, 2 * c.tp / (2 * c.tp + c.fp + c.fn))


# ---------------------------------------------------------------- k-NN

@dataclass(frozen=True)
class KNNModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    minority: int


def train_knn(train: Dataset, k: int = 3) -> KNNModel:
    if train.n_rows == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= train.n_rows:
        raise ValueError("k must be in [1, n_train]")
    return KNNModel(train.features, train.labels, k, train.minority_class)


def predict_knn(model: KNNModel, test, chunk: int = 512) -> np.ndarray:
    """Majority vote over the k nearest training rows; ties go to the minority."""
    X = test.features if isinstance(test, Dataset) else np.asarray(test, dtype=np.float64)
    out = np.empty(len(X), dtype=np.int64)
    for s in range(0, len(X), chunk):
        D = cdist(X[s:s + chunk], model.X, "sqeuclidean")
        nn = np.argsort(D, axis=1, kind="stable")[:, : model.k]
        n_min = np.sum(model.y[nn] == model.minority, axis=1)
        out[s:s + chunk] = np.where(2 * n_min >= model.k, model.minority, 1 - model.minority)
    return out


# ---------------------------------------------------------------- CART / forest

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) class counts in each node

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict_counts(self, X: np.ndarray, max_depth: int | None = None) -> np.ndarray:
        """Class counts of the node reached by each row.

        Descent stops at ``max_depth``, which reproduces a tree grown with
        that depth limit.
        """
        limit = self.max_depth if max_depth is None else max_depth
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(limit):
            f = self.feature[node]
            active = (f >= 0) & (self.depth[node] < limit)
            if not active.any():
                break
            a = rows[active]
            n = node[active]
            go_left = X[a, f[active]] <= self.threshold[n]
            node[a] = np.where(go_left, self.left[n], self.right[n])
        return self.counts[node]


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats: Sequence[int]):
    n = len(yn)
    n_pos = int(yn.sum())
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best_score, best_f, best_thr = math.inf, -1, 0.0
    for f in feats:
        v = Xn[:, f]
        o = np.argsort(v, kind="stable")
        vs = v[o]
        valid = vs[1:] > vs[:-1]
        if not valid.any():
            continue
        cpos = np.cumsum(yn[o])[:-1]
        pl = cpos / nl
        pr = (n_pos - cpos) / nr
        # n * weighted gini
        score = nl * pl * (1 - pl) + nr * pr * (1 - pr)
        score[~valid] = math.inf
        i = int(np.argmin(score))
        if score[i] < best_score:
            thr = 0.5 * (vs[i] + vs[i + 1])
            if not vs[i] <= thr < vs[i + 1]:
                thr = vs[i]
            best_score, best_f, best_thr = score[i], int(f), float(thr)
    return best_f, best_thr


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int, max_features: int, seed) -> Tree:
    """CART with Gini impurity and a random feature subset per node.

    Each node draws its feature subset from a stream keyed by its path id,
    so a shallower tree is an exact truncation of a deeper one.
    """
    n_features = X.shape[1]
    feature, threshold, left, right, depth, counts = [], [], [], [], [], []
    y = y.astype(np.int64)

    def new_node(d: int, idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        depth.append(d)
        counts.append(np.bincount(y[idx], minlength=2))
        return len(feature) - 1

    stack = [(new_node(0, np.arange(len(y))), np.arange(len(y)), 0, 1)]
    while stack:
        node, idx, d, path = stack.pop()
        c = counts[node]
        if d >= max_depth or c[0] == 0 or c[1] == 0:
            continue
        rng = np.random.default_rng([*seed, path])
        feats = rng.choice(n_features, size=max_features, replace=False)
        Xn = X[idx]
        f, thr = _best_split(Xn, y[idx], feats)
        if f < 0:
            continue
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(d + 1, li)
        right[node] = new_node(d + 1, ri)
        stack.append((right[node], ri, d + 1, 2 * path + 1))
        stack.append((left[node], li, d + 1, 2 * path))
    return Tree(np.array(feature, np.int64), np.array(threshold), np.array(left, np.int64),
                np.array(right, np.int64), np.array(depth, np.int64), np.array(counts, np.int64))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")


@dataclass
class ForestModel:
    trees: list
    minority: int
    config: ForestConfig

    def predict(self, X, n_trees: int | None = None, max_depth: int | None = None) -> np.ndarray:
        """Majority vote of the first ``n_trees`` trees truncated at ``max_depth``.

        Each tree votes for the majority class of its node (minority on ties);
        forest ties also go to the minority.
        """
        X = X.features if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
        n_trees = len(self.trees) if n_trees is None else n_trees
        if n_trees > len(self.trees):
            raise ValueError("forest has fewer trees than requested")
        depth = self.config.max_depth if max_depth is None else min(max_depth, self.config.max_depth)
        m = self.minority
        votes = np.zeros(len(X), dtype=np.int64)
        for tree in self.trees[:n_trees]:
            cnt = tree.predict_counts(X, depth)
            votes += cnt[:, m] >= cnt[:, 1 - m]
        return np.where(2 * votes >= n_trees, m, 1 - m)


def train_forest(train: Dataset, cfg: ForestConfig) -> ForestModel:
    """Bagged CART trees with ceil(sqrt(n_features)) candidate features per split."""
    counts = train.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise ValueError("training set must contain both classes")
    X, y = train.features, train.labels
    n = len(y)
    m = int(math.ceil(math.sqrt(train.n_features)))
    seed = int(cfg.seed) % 2**63
    trees = []
    for t in range(cfg.n_trees):
        boot = np.random.default_rng([seed, t]).integers(0, n, size=n)
        trees.append(grow_tree(X[boot], y[boot], cfg.max_depth, m, (seed, t)))
    return ForestModel(trees, train.minority_class, cfg)


def predict_forest(model: ForestModel, test) -> np.ndarray:
    return model.predict(test)


# ---------------------------------------------------------------- cross-validation

@dataclass(frozen=True)
class ModelGrid:
    """Hyperparameter grid. ``kind`` is ``forest`` or ``knn``."""

    kind: str = "forest"
    trees: tuple = TREE_GRID
    depths: tuple = DEPTH_GRID
    knn_k: tuple = (1, 3, 5)

    def cells(self) -> list[tuple]:
        if self.kind == "knn":
            return [(k,) for k in sorted(self.knn_k)]
        return [(b, d) for b in sorted(self.trees) for d in sorted(self.depths)]


def _fit_predict_grid(train: Dataset, test_X: np.ndarray, grid: ModelGrid, seed: int) -> dict:
    if grid.kind == "knn":
        out = {}
        for (k,) in grid.cells():
            out[(k,)] = predict_knn(train_knn(train, min(k, train.n_rows)), test_X)
        return out
    forest = train_forest(train, ForestConfig(max(grid.trees), max(grid.depths), seed))
    return {(b, d): forest.predict(test_X, b, d) for b, d in grid.cells()}


def _gmean(y_true, y_pred, positive: int) -> float:
    return compute_metrics(ConfusionCounts.from_predictions(y_true, y_pred, positive)).gmean


def _reduce(train: Dataset, is_cfg: Optional[SelectionConfig], workers: int) -> np.ndarray:
    if is_cfg is None:
        return np.arange(train.n_rows)
    buckets = bucketize(train, is_cfg.hash_config, workers=workers)
    return run_selection(train, buckets, is_cfg.sampler_config, workers=workers).selected


@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionCounts
    metrics: MetricsReport
    winner: tuple
    grid_scores: dict
    n_train: int
    n_selected: int
    selected: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)
    seconds: float = 0.0

    @property
    def retention(self) -> float:
        return self.n_selected / self.n_train


@dataclass
class CVResult:
    config_id: str
    folds: list

    def metric_values(self, name: str) -> np.ndarray:
        if name == "retention":
            return np.array([f.retention for f in self.folds])
        return np.array([getattr(f.metrics, name) for f in self.folds])

    def summary(self) -> dict:
        out = {}
        for name in (*METRIC_NAMES, "retention"):
            v = self.metric_values(name)
            out[name] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config_id,
            "summary": self.summary(),
            "folds": [
                {
                    "fold": f.fold,
                    **f.metrics.as_dict(),
                    "confusion": vars(f.confusion),
                    "winner": list(f.winner),
                    "retention_fraction": f.retention,
                    "n_train": f.n_train,
                    "n_selected": f.n_selected,
                    "seconds": f.seconds,
                }
                for f in self.folds
            ],
        }

    def flat_rows(self, dataset: str = "") -> list[dict]:
        rows = []
        for f in self.folds:
            rows.append({"dataset": dataset, "config": self.config_id, "fold": f.fold,
                         **f.metrics.as_dict(), "retention": f.retention,
                         "winner": "/".join(str(v) for v in f.winner), "seconds": f.seconds})
        return rows


def run_cv(d: Dataset, folds: FoldPlan, is_cfg: Optional[SelectionConfig] = None,
           grid: ModelGrid = ModelGrid(), inner_folds: int = 3, seed: int = 0,
           workers: int = 1, standardize: bool = True) -> CVResult:
    """Outer stratified CV with instance selection on the training split only.

    Within each outer fold the grid cell with the best mean inner-CV gmean
    wins (ties: fewer trees, then shallower). Inner validation rows are never
    reduced. The winner is refit on the selected outer training rows and
    scored on the untouched test rows.
    """
    results = []
    pos = d.minority_class
    cfg_id = is_cfg.config_id if is_cfg is not None else "baseline"
    for fold in range(folds.n_folds):
        t0 = time.perf_counter()
        tr_idx, te_idx = folds.split(fold)
        train, test = d.subset(tr_idx), d.subset(te_idx)
        if standardize:
            st = fit_standardizer(train)
            train, test = apply_standardizer(st, train), apply_standardizer(st, test)
        cells = grid.cells()
        scores = {c: [] for c in cells}
        if inner_folds >= 2 and len(cells) > 1:
            inner = plan_folds(train, inner_folds, seed + 1000 * (fold + 1))
            for j in range(inner_folds):
                itr, iva = inner.split(j)
                itrain = train.subset(itr)
                keep = _reduce(itrain, is_cfg, workers)
                preds = _fit_predict_grid(itrain.subset(keep), train.features[iva], grid, seed)
                for c in cells:
                    scores[c].append(_gmean(train.labels[iva], preds[c], pos))
            mean_scores = {c: float(np.mean(v)) for c, v in scores.items()}
            best = max(mean_scores.values())
            winner = next(c for c in cells if mean_scores[c] == best)
        else:
            mean_scores = {}
            winner = cells[-1]
        keep = _reduce(train, is_cfg, workers)
        if grid.kind == "knn":
            model_grid = ModelGrid("knn", knn_k=winner)
        else:
            model_grid = ModelGrid("forest", trees=(winner[0],), depths=(winner[1],))
        pred = _fit_predict_grid(train.subset(keep), test.features, model_grid, seed)[winner]
        cc = ConfusionCounts.from_predictions(test.labels, pred, pos)
        results.append(FoldResult(
            fold=fold, confusion=cc, metrics=compute_metrics(cc), winner=winner,
            grid_scores={"/".join(map(str, c)): s for c, s in mean_scores.items()},
            n_train=len(tr_idx), n_selected=len(keep), selected=tr_idx[keep],
            test_indices=te_idx, seconds=time.perf_counter() - t0,
        ))
    return CVResult(cfg_id, results)
