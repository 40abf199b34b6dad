import math

import numpy as np
import pytest

from lshis.data import Dataset, make_half_circles, make_inner_circles, plan_folds
from lshis.eval import (
    ConfusionCounts,
    ForestConfig,
    MetricError,
    ModelGrid,
    compute_metrics,
    grow_tree,
    predict_forest,
    predict_knn,
    run_cv,
    train_forest,
    train_knn,
)
from lshis.pipeline import SelectionConfig


# ---------------------------------------------------------------- metrics

def test_perfect_classifier():
    m = compute_metrics(ConfusionCounts(tp=7, fp=0, tn=40, fn=0))
    assert (m.se, m.sp, m.gmean, m.bacc, m.f1) == (1, 1, 1, 1, 1)


def test_metrics_hand_example():
    m = compute_metrics(ConfusionCounts(tp=3, fp=1, tn=90, fn=6))
    assert m.se == pytest.approx(1 / 3)
    assert m.sp == pytest.approx(90 / 91)
    assert m.f1 == pytest.approx(6 / 13)


def test_metrics_published_row():
    # Se 88.09, Sp 99.85 -> BAcc 93.97 as published; Gmean of the means is 93.79
    se, sp = 0.8809, 0.9985
    assert (se + sp) / 2 == pytest.approx(0.9397, abs=5e-5)
    assert math.sqrt(se * sp) == pytest.approx(0.9379, abs=5e-5)
    m = compute_metrics(ConfusionCounts(tp=8809, fp=15, tn=9985, fn=1191))
    assert m.se == se and m.sp == sp
    assert m.bacc == pytest.approx(0.9397, abs=5e-5)
    assert m.gmean == pytest.approx(0.9379, abs=5e-5)


def test_metric_identities_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        tp, fn, tn, fp = (int(v) for v in rng.integers(0, 50, 4))
        if tp + fn == 0 or tn + fp == 0:
            continue
        m = compute_metrics(ConfusionCounts(tp, fp, tn, fn))
        assert m.gmean == pytest.approx(math.sqrt(m.se * m.sp))
        assert m.bacc == pytest.approx((m.se + m.sp) / 2)
        assert m.gmean <= m.bacc + 1e-12
        for v in m.as_dict().values():
            assert 0 <= v <= 1


def test_metric_error_when_class_missing():
    with pytest.raises(MetricError):
        compute_metrics(ConfusionCounts(0, 3, 5, 0))


def test_confusion_from_predictions():
    c = ConfusionCounts.from_predictions([1, 1, 0, 0, 0], [1, 0, 1, 0, 0], positive=1)
    assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 2)


# ---------------------------------------------------------------- kNN

def test_knn_exact_match_k1():
    X = np.random.default_rng(0).normal(size=(10, 2))
    y = np.r_[np.zeros(7, int), np.ones(3, int)]
    m = train_knn(Dataset(X, y, 1), 1)
    np.testing.assert_array_equal(predict_knn(m, X), y)


def test_knn_single_class_training():
    m = train_knn(Dataset(np.random.default_rng(0).normal(size=(6, 2)), np.zeros(6, int), 1), 3)
    assert set(predict_knn(m, np.random.default_rng(1).normal(size=(20, 2)))) == {0}


def test_knn_matches_exhaustive_scan():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(20, 2))
    y = np.r_[np.zeros(14, int), np.ones(6, int)]
    Q = rng.normal(size=(30, 2))
    for k in (1, 3, 5):
        got = predict_knn(train_knn(Dataset(X, y, 1), k), Q)
        for q, g in zip(Q, got):
            dists = sorted((float(np.sum((q - x) ** 2)), i) for i, x in enumerate(X))
            votes = sum(y[i] for _, i in dists[:k])
            assert g == (1 if 2 * votes >= k else 0)


# ---------------------------------------------------------------- forest

def test_forest_two_point_set():
    d = Dataset(np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]), np.array([0, 1, 1]), 0)
    for seed in range(5):
        m = train_forest(d, ForestConfig(1, 1000, seed))
        # a bootstrap may miss a class; the tree then predicts the class it saw
        boot_classes = set(m.trees[0].counts[0].nonzero()[0])
        if boot_classes == {0, 1}:
            np.testing.assert_array_equal(predict_forest(m, d), d.labels)


def test_forest_separable_training_accuracy():
    d = make_half_circles(30, 3, 0.05, 0)
    m = train_forest(d, ForestConfig(25, 30, 1))
    assert np.mean(predict_forest(m, d) == d.labels) > 0.97


def test_forest_deterministic():
    d = make_inner_circles(20, 5, 0.1, 2)
    a = predict_forest(train_forest(d, ForestConfig(10, 10, 4)), d)
    b = predict_forest(train_forest(d, ForestConfig(10, 10, 4)), d)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("depth", [1, 2, 3, 5, 8])
def test_truncated_tree_equals_direct_growth(depth):
    d = make_half_circles(40, 5, 0.3, 6)
    X, y = d.features, d.labels
    deep = grow_tree(X, y, 30, 1, (3, 0))
    shallow = grow_tree(X, y, depth, 1, (3, 0))
    np.testing.assert_array_equal(deep.predict_counts(X, depth), shallow.predict_counts(X))
    Q = np.random.default_rng(0).normal(size=(200, 2))
    np.testing.assert_array_equal(deep.predict_counts(Q, depth), shallow.predict_counts(Q))


def test_forest_prefix_equals_smaller_forest():
    d = make_inner_circles(30, 4, 0.2, 1)
    big = train_forest(d, ForestConfig(12, 20, 8))
    small = train_forest(d, ForestConfig(5, 7, 8))
    Q = np.random.default_rng(1).normal(size=(100, 2))
    np.testing.assert_array_equal(big.predict(Q, 5, 7), small.predict(Q))


# ---------------------------------------------------------------- cross-validation

def test_cv_baseline_keeps_all_rows():
    d = make_half_circles(20, 5, 0.2, 0)
    res = run_cv(d, plan_folds(d, 3, 0), None, ModelGrid(trees=(5,), depths=(5, 10)))
    assert res.config_id == "baseline"
    assert all(f.retention == 1 for f in res.folds)


def test_cv_test_rows_never_selected():
    d = make_inner_circles(20, 8, 0.2, 1)
    folds = plan_folds(d, 4, 2)
    res = run_cv(d, folds, SelectionConfig("rhf", "drop3-one", 4), ModelGrid(trees=(5, 10), depths=(5,)))
    for f in res.folds:
        assert np.intersect1d(f.selected, f.test_indices).size == 0
        np.testing.assert_array_equal(f.test_indices, folds.test_indices(f.fold))
        assert 0 < f.retention < 1
        assert f.winner in [(5, 5), (10, 5)]
    s = res.summary()
    assert set(s) >= {"gmean", "retention"}
    assert len(res.flat_rows("x")) == 4


def test_cv_knn_grid():
    d = make_half_circles(20, 5, 0.2, 0)
    res = run_cv(d, plan_folds(d, 3, 0), SelectionConfig("dpf", "entropy", 2),
                 ModelGrid("knn", knn_k=(1, 3)))
    assert all(f.winner in [(1,), (3,)] for f in res.folds)


def test_cv_deterministic():
    d = make_half_circles(20, 5, 0.2, 0)
    f = plan_folds(d, 3, 0)
    g = ModelGrid(trees=(5,), depths=(5, 10))
    cfg = SelectionConfig("rhf", "entropy", 4)
    a = run_cv(d, f, cfg, g).flat_rows()
    b = run_cv(d, f, cfg, g, workers=4).flat_rows()
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(a) == strip(b)


@pytest.mark.slow
def test_half_circles_selection_beats_baseline():
    d = make_half_circles(50, 100, 0.1, 0)
    folds = plan_folds(d, 5, 0)
    base = run_cv(d, folds, None).summary()["gmean"]["mean"]
    sel = run_cv(d, folds, SelectionConfig("rhf", "drop3-one", 10)).summary()["gmean"]["mean"]
    assert sel > base
