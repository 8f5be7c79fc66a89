"""
랜덤 포레스트 / 분류 성능 평가 테스트
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microtree.errors import (
    DegenerateTrainingError,
    DomainError,
    InsufficientDataError,
    ShapeError,
    UndefinedMetricError,
)
from microtree.features import FEATURE_NAMES, build_features
from microtree.forest import (
    DecisionTree,
    Forest,
    ForestConfig,
    calibration_curve,
    classification_metrics,
    cross_validate,
    evaluate_auc,
    evaluate_forest,
    feature_importance,
    grouped_importance,
    holdout_evaluate,
    load_forest,
    predict_proba,
    predict_proba_batch,
    roc_curve,
    save_forest,
    train,
)
from microtree.forest.evaluation import walk_forward_folds
from microtree.market import GeneratorConfig, synthesize_bars

from conftest import toy_matrix

SEPARABLE_CONFIG = ForestConfig(n_trees=20, max_depth=6, min_samples_leaf=5, features_per_split=17, seed=1)


# ============================================================================
# 학습 / 예측
# ============================================================================


def test_separable_training_accuracy():
    """라벨 = sign(피처 0), 1,000행 → 학습 정확도 >= 0.99"""
    matrix = toy_matrix(1000)
    forest = train(matrix, SEPARABLE_CONFIG)
    predicted = (predict_proba_batch(forest, matrix.X) > 0.5).astype(int)
    assert float(np.mean(predicted == matrix.y)) >= 0.99


def test_training_is_deterministic():
    matrix = toy_matrix(500, seed=4)
    config = ForestConfig(n_trees=8, max_depth=5, min_samples_leaf=5, seed=9)
    probe = toy_matrix(50, seed=99).X
    first, second = train(matrix, config), train(matrix, config)
    assert first == second
    np.testing.assert_array_equal(predict_proba_batch(first, probe), predict_proba_batch(second, probe))


def test_thread_count_does_not_change_forest():
    matrix = toy_matrix(400, seed=6)
    config = ForestConfig(n_trees=6, max_depth=4, min_samples_leaf=5, seed=2)
    assert train(matrix, config) == train(matrix, config.model_copy(update={"n_jobs": 3}))


def test_depth_zero_tree_predicts_up_fraction():
    matrix = toy_matrix(300, seed=8)
    config = ForestConfig(n_trees=1, max_depth=0, min_samples_leaf=1, bootstrap=False)
    forest = train(matrix, config)
    expected = float(matrix.y.mean())
    np.testing.assert_allclose(predict_proba_batch(forest, toy_matrix(20, seed=1).X), expected)


def test_two_tree_mean():
    """리프 1.0, 0.0 두 트리 → 0.5"""
    forest = Forest(trees=(DecisionTree.leaf(1.0), DecisionTree.leaf(0.0)))
    assert predict_proba(forest, np.zeros(len(FEATURE_NAMES))) == 0.5


def test_pure_leaf_forest():
    forest = Forest(trees=(DecisionTree.leaf(1.0, 25),))
    assert predict_proba(forest, np.ones(len(FEATURE_NAMES))) == 1.0


def test_duplicated_trees_do_not_change_prediction(small_forest, small_matrix):
    """기존과 같은 트리를 더해도 평균 확률은 그대로"""
    doubled = Forest(trees=small_forest.trees + small_forest.trees)
    np.testing.assert_allclose(
        predict_proba_batch(doubled, small_matrix.X), predict_proba_batch(small_forest, small_matrix.X), rtol=1e-12
    )


def test_trees_respect_max_depth():
    config = ForestConfig(n_trees=5, max_depth=3, min_samples_leaf=2, seed=5)
    forest = train(toy_matrix(500, seed=2), config)
    assert all(1 <= tree.depth <= 3 for tree in forest.trees)
    assert DecisionTree.leaf(0.5).depth == 0


def test_predict_accepts_feature_row(small_forest, small_matrix):
    row = small_matrix.row(0)
    assert predict_proba(small_forest, row) == pytest.approx(predict_proba_batch(small_forest, small_matrix.X[:1])[0])


def test_strong_positive_ofi_predicts_up(small_forest, small_matrix):
    """OFI 상위 10% 행의 평균 상승 확률 > 0.5"""
    ofi = small_matrix.frame["ofi"].to_numpy()
    top = ofi >= np.quantile(ofi, 0.9)
    assert float(predict_proba_batch(small_forest, small_matrix.X[top]).mean()) > 0.5


def test_predict_rejects_wrong_dimension(small_forest):
    with pytest.raises(ShapeError):
        predict_proba(small_forest, np.zeros(16))
    with pytest.raises(ShapeError):
        predict_proba_batch(small_forest, np.zeros((3, 18)))


def test_predict_rejects_non_finite(small_forest):
    x = np.zeros(len(FEATURE_NAMES))
    x[3] = np.nan
    with pytest.raises(DomainError):
        predict_proba(small_forest, x)


def test_train_rejects_single_class():
    matrix = toy_matrix(200)
    with pytest.raises(DegenerateTrainingError):
        train(matrix.with_labels(np.ones(200, dtype=int)), SEPARABLE_CONFIG)


def test_train_rejects_too_few_rows():
    with pytest.raises(InsufficientDataError):
        train(toy_matrix(30), ForestConfig(n_trees=2, min_samples_leaf=20))


def test_save_and_load_forest(tmp_path, small_forest):
    path = tmp_path / "model.json"
    save_forest(small_forest, path, metadata={"seed": 3})
    assert load_forest(path) == small_forest


# ============================================================================
# 피처 중요도
# ============================================================================


def test_depth_zero_importance_is_uniform():
    forest = train(toy_matrix(200), ForestConfig(n_trees=3, max_depth=0, min_samples_leaf=1))
    importances = feature_importance(forest)
    assert list(importances) == list(FEATURE_NAMES)
    for weight in importances.values():
        assert weight == pytest.approx(1.0 / 17)


def test_single_signal_feature_dominates_importance():
    forest = train(toy_matrix(1000), SEPARABLE_CONFIG)
    importances = feature_importance(forest)
    assert importances["returns_lag_1"] > 0.9
    assert sum(importances.values()) == pytest.approx(1.0)


def test_grouped_importance_sums_to_one(small_forest):
    grouped = grouped_importance(feature_importance(small_forest))
    assert set(grouped) == {"returns", "spread", "volume", "volatility", "order_flow", "time"}
    assert sum(grouped.values()) == pytest.approx(1.0)


# ============================================================================
# 평가 지표
# ============================================================================


@pytest.mark.parametrize(
    "scores, labels, expected",
    [
        ([0.9, 0.1], [1, 0], 1.0),
        ([0.1, 0.9], [1, 0], 0.0),
        ([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0], 0.5),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert evaluate_auc(scores, labels) == pytest.approx(expected)


@settings(max_examples=50, deadline=None)
@given(
    levels=st.lists(st.integers(0, 50), min_size=4, max_size=60),
    seed=st.integers(0, 2**16),
)
def test_auc_invariant_under_increasing_transform(levels, seed):
    labels = np.random.default_rng(seed).integers(0, 2, size=len(levels))
    labels[0], labels[1] = 0, 1
    scores = np.array(levels, dtype="float64") / 50.0
    auc = evaluate_auc(scores, labels)
    assert evaluate_auc(np.exp(3.0 * scores), labels) == pytest.approx(auc, abs=1e-12)
    assert evaluate_auc(2.0 * scores + 1.0, labels) == pytest.approx(auc, abs=1e-12)


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        evaluate_auc([0.2, 0.7], [1, 1])


def test_roc_curve_endpoints():
    points = roc_curve([0.9, 0.8, 0.4, 0.1], [1, 0, 1, 0])
    assert (points[0].fpr, points[0].tpr) == (0.0, 0.0)
    assert points[0].threshold == float("inf")
    assert (points[-1].fpr, points[-1].tpr) == (1.0, 1.0)
    assert all(a.fpr <= b.fpr and a.tpr <= b.tpr for a, b in zip(points, points[1:]))


def test_calibration_curve_single_bin():
    points = calibration_curve([0.5] * 4, [1, 0, 1, 0])
    assert len(points) == 1
    assert points[0].mean_predicted == 0.5
    assert points[0].observed_frequency == 0.5
    assert points[0].count == 4


def test_calibration_curve_constant_labels():
    scores = np.linspace(0.01, 0.99, 50)
    points = calibration_curve(scores, np.ones(50, dtype=int))
    assert all(p.observed_frequency == 1.0 for p in points)


def test_calibration_curve_of_calibrated_scores():
    rng = np.random.default_rng(0)
    scores = rng.random(100_000)
    labels = (rng.random(100_000) < scores).astype(int)
    points = calibration_curve(scores, labels, n_bins=10)
    assert max(abs(p.observed_frequency - p.mean_predicted) for p in points) < 0.02


def test_classification_metrics_perfect():
    metrics = classification_metrics([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert metrics["accuracy"] == 1.0
    assert metrics["balanced_accuracy"] == 1.0
    assert metrics["f1_up"] == 1.0


def test_walk_forward_folds_train_precedes_test():
    folds = walk_forward_folds(120, 5)
    assert len(folds) == 5
    for train_idx, test_idx in folds:
        assert train_idx.max() < test_idx.min()
    assert folds[0][1].tolist() == list(range(20, 40))


def test_cross_validate_requires_enough_rows():
    with pytest.raises(InsufficientDataError):
        cross_validate(toy_matrix(100), ForestConfig(n_trees=2, min_samples_leaf=20), n_folds=5)


def test_holdout_report_on_planted_signal(small_matrix):
    config = ForestConfig(n_trees=10, max_depth=4, min_samples_leaf=10, seed=0)
    report = holdout_evaluate(small_matrix, config, test_fraction=0.2)
    assert report.n_train + report.n_test == len(small_matrix)
    assert report.auc > 0.7
    assert len(report.probability_histogram) == 20


def test_evaluate_forest_combines_holdout_and_cv(small_matrix):
    config = ForestConfig(n_trees=5, max_depth=4, min_samples_leaf=10, seed=0)
    report = evaluate_forest(small_matrix, config, n_folds=3, test_fraction=0.2)
    holdout = holdout_evaluate(small_matrix, config, test_fraction=0.2)
    assert report.auc == holdout.auc
    assert len(report.cv_fold_aucs) == 3
    assert report.cv_mean_auc == pytest.approx(float(np.mean(report.cv_fold_aucs)))
    assert evaluate_forest(small_matrix, config, with_cv=False).cv_mean_auc is None


@pytest.mark.slow
def test_cross_validated_auc_on_planted_signal():
    """신호 강도 0.8, 20,000행 → 평균 CV AUC >= 0.80, 라벨 셔플 → [0.45, 0.55]"""
    matrix = build_features(synthesize_bars(GeneratorConfig(n_bars=20_100), seed=13))
    config = ForestConfig(n_trees=50, max_depth=8, min_samples_leaf=20, seed=0, n_jobs=4)
    assert cross_validate(matrix, config, n_folds=5).cv_mean_auc >= 0.80

    rng = np.random.default_rng(np.random.SeedSequence([13, 1]))
    shuffled = matrix.with_labels(rng.permutation(matrix.y))
    assert 0.45 <= cross_validate(shuffled, config, n_folds=5).cv_mean_auc <= 0.55
