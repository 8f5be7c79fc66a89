"""
포레스트 평가 지표

- evaluate_auc: Mann–Whitney 순위 기반 AUC (동률 ½)
- roc_curve / calibration_curve: 그림용 곡선 데이터
- cross_validate: 시간 순서 walk-forward 교차검증
- holdout_evaluate: 앞 80% 학습, 뒤 20% 평가
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import rankdata

from microtree.errors import ConfigError, InsufficientDataError, UndefinedMetricError
from microtree.features.microstructure import FeatureMatrix
from microtree.forest.ensemble import ForestConfig, feature_importance, grouped_importance, predict_proba_batch, train

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5


class CalibrationPoint(BaseModel):
    """확률 보정 곡선의 한 점"""

    model_config = ConfigDict(frozen=True)

    mean_predicted: float = Field(ge=0.0, le=1.0, description="구간 내 평균 예측 확률")
    observed_frequency: float = Field(ge=0.0, le=1.0, description="구간 내 라벨 1 비율")
    count: int = Field(ge=1, description="구간 표본 수")


class RocPoint(BaseModel):
    """ROC 곡선의 한 점"""

    model_config = ConfigDict(frozen=True)

    fpr: float
    tpr: float
    threshold: float


class ClassMetrics(BaseModel):
    """클래스별 precision / recall / f1"""

    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    f1: float
    support: int


class CrossValidationResult(BaseModel):
    """walk-forward 교차검증 결과"""

    model_config = ConfigDict(frozen=True)

    cv_fold_aucs: List[float]
    cv_mean_auc: float
    cv_std: float = Field(ge=0.0, description="fold AUC 표본 표준편차")


class EvalReport(BaseModel):
    """분류 성능 리포트 (JSON 필드명은 성능 표와 동일)"""

    auc: Optional[float] = Field(default=None, description="홀드아웃 AUC-ROC")
    accuracy: Optional[float] = None
    balanced_accuracy: Optional[float] = None
    precision_up: Optional[float] = None
    recall_up: Optional[float] = None
    f1_up: Optional[float] = None
    precision_down: Optional[float] = None
    recall_down: Optional[float] = None
    f1_down: Optional[float] = None
    mean_proba_up: Optional[float] = Field(default=None, description="실제 상승 표본의 평균 예측 확률")
    mean_proba_down: Optional[float] = Field(default=None, description="실제 하락 표본의 평균 예측 확률")
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    cv_mean_auc: Optional[float] = None
    cv_std: Optional[float] = Field(default=None, ge=0.0)
    cv_fold_aucs: List[float] = Field(default_factory=list)
    calibration_points: List[CalibrationPoint] = Field(default_factory=list)
    roc_points: List[RocPoint] = Field(default_factory=list)
    probability_histogram: List[Dict[str, float]] = Field(
        default_factory=list, description="예측 확률 구간별 상승/하락 표본 수"
    )
    feature_importance: Dict[str, float] = Field(default_factory=dict)
    grouped_importance: Dict[str, float] = Field(default_factory=dict)


# ============================================================================
# 지표
# ============================================================================


def _check_binary(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype="float64")
    y = np.asarray(labels, dtype="int64")
    if s.shape != y.shape or s.ndim != 1:
        raise ConfigError(f"scores와 labels 길이가 다릅니다: {s.shape} vs {y.shape}")
    return s, y


def evaluate_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    AUC = P(임의의 양성 점수 > 임의의 음성 점수), 동률은 ½

    Raises:
        UndefinedMetricError: 한 클래스만 있는 경우
    """
    s, y = _check_binary(scores, labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC는 두 클래스가 모두 필요합니다 (양성 {n_pos}, 음성 {n_neg})")
    ranks = rankdata(s, method="average")
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> List[RocPoint]:
    """(fpr, tpr, threshold) 점 목록, (0, 0)에서 시작해 (1, 1)에서 끝남"""
    s, y = _check_binary(scores, labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC 곡선은 두 클래스가 모두 필요합니다")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    # 같은 점수는 한 번에 통과
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), s_sorted.size - 1]
    points = [RocPoint(fpr=0.0, tpr=0.0, threshold=float("inf"))]
    for i in last:
        points.append(RocPoint(fpr=float(fp[i] / n_neg), tpr=float(tp[i] / n_pos), threshold=float(s_sorted[i])))
    return points


def calibration_curve(scores: Sequence[float], labels: Sequence[int], n_bins: int = 10) -> List[CalibrationPoint]:
    """
    [0, 1] 등간격 구간별 (평균 예측, 관측 빈도, 표본 수), 빈 구간은 생략

    Raises:
        ConfigError: n_bins < 2
    """
    if n_bins < 2:
        raise ConfigError(f"n_bins는 2 이상이어야 합니다: {n_bins}")
    s, y = _check_binary(scores, labels)
    bins = np.minimum(np.floor(np.clip(s, 0.0, 1.0) * n_bins).astype(np.int64), n_bins - 1)
    points = []
    for b in range(n_bins):
        mask = bins == b
        count = int(mask.sum())
        if count == 0:
            continue
        points.append(
            CalibrationPoint(
                mean_predicted=float(s[mask].mean()),
                observed_frequency=float(y[mask].mean()),
                count=count,
            )
        )
    return points


def probability_histogram(scores: np.ndarray, labels: np.ndarray, n_bins: int = 20) -> List[Dict[str, float]]:
    """실제 결과별 예측 확률 분포"""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    up, _ = np.histogram(scores[labels == 1], bins=edges)
    down, _ = np.histogram(scores[labels == 0], bins=edges)
    return [
        {
            "bin_lower": float(edges[i]),
            "bin_upper": float(edges[i + 1]),
            "count_up": int(up[i]),
            "count_down": int(down[i]),
        }
        for i in range(n_bins)
    ]


def _class_metrics(predicted: np.ndarray, actual: np.ndarray, positive: int) -> ClassMetrics:
    tp = int(((predicted == positive) & (actual == positive)).sum())
    fp = int(((predicted == positive) & (actual != positive)).sum())
    fn = int(((predicted != positive) & (actual == positive)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(precision=precision, recall=recall, f1=f1, support=int((actual == positive).sum()))


def classification_metrics(scores: Sequence[float], labels: Sequence[int]) -> Dict[str, float]:
    """0.5 임계값 기준 정확도 / 균형 정확도 / 클래스별 지표"""
    s, y = _check_binary(scores, labels)
    predicted = (s > DECISION_THRESHOLD).astype(np.int64)
    up = _class_metrics(predicted, y, 1)
    down = _class_metrics(predicted, y, 0)
    return {
        "accuracy": float((predicted == y).mean()),
        "balanced_accuracy": (up.recall + down.recall) / 2.0,
        "precision_up": up.precision,
        "recall_up": up.recall,
        "f1_up": up.f1,
        "precision_down": down.precision,
        "recall_down": down.recall,
        "f1_down": down.f1,
    }


# ============================================================================
# 교차검증 / 홀드아웃
# ============================================================================


def walk_forward_folds(n_rows: int, n_folds: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    n_folds + 1개 연속 블록으로 나누고 fold k는 블록 [0, k)로 학습, 블록 k로 평가

    Returns:
        (train_idx, test_idx) 목록, 길이 n_folds
    """
    blocks = np.array_split(np.arange(n_rows), n_folds + 1)
    return [(np.concatenate(blocks[:k]), blocks[k]) for k in range(1, n_folds + 1)]


def cross_validate(matrix: FeatureMatrix, config: ForestConfig, n_folds: int = 5) -> CrossValidationResult:
    """
    시간 순서 walk-forward 교차검증 (셔플 없음)

    Raises:
        ConfigError: n_folds < 2
        InsufficientDataError: 블록당 행 수 < 2 * min_samples_leaf
    """
    if n_folds < 2:
        raise ConfigError(f"n_folds는 2 이상이어야 합니다: {n_folds}")
    n = len(matrix)
    block = n // (n_folds + 1)
    if block < 2 * config.min_samples_leaf:
        raise InsufficientDataError(
            f"교차검증 행 수가 부족합니다: 블록당 {block}행 < {2 * config.min_samples_leaf} (rows={n}, folds={n_folds})"
        )

    aucs = []
    for k, (train_idx, test_idx) in enumerate(walk_forward_folds(n, n_folds), start=1):
        forest = train(matrix.subset(train_idx), config)
        test = matrix.subset(test_idx)
        auc = evaluate_auc(predict_proba_batch(forest, test.X), test.y)
        logger.info(f"CV fold {k}/{n_folds}: train={train_idx.size}, test={test_idx.size}, auc={auc:.4f}")
        aucs.append(auc)

    return CrossValidationResult(
        cv_fold_aucs=aucs,
        cv_mean_auc=float(np.mean(aucs)),
        cv_std=float(np.std(aucs, ddof=1)),
    )


def holdout_evaluate(
    matrix: FeatureMatrix,
    config: ForestConfig,
    test_fraction: float = 0.2,
    n_calibration_bins: int = 10,
) -> EvalReport:
    """
    시간 순서 홀드아웃 평가: 앞 (1 - test_fraction)으로 학습, 나머지로 평가

    Raises:
        ConfigError: test_fraction이 (0, 1) 밖
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction은 (0, 1) 범위여야 합니다: {test_fraction}")
    n = len(matrix)
    split = int(round(n * (1.0 - test_fraction)))
    if split <= 0 or split >= n:
        raise InsufficientDataError(f"홀드아웃 분할에 필요한 행이 부족합니다: rows={n}")

    forest = train(matrix.subset(np.arange(split)), config)
    test = matrix.subset(np.arange(split, n))
    scores = predict_proba_batch(forest, test.X)
    labels = test.y

    metrics = classification_metrics(scores, labels)
    importances = feature_importance(forest)
    report = EvalReport(
        auc=evaluate_auc(scores, labels),
        **metrics,
        mean_proba_up=float(scores[labels == 1].mean()),
        mean_proba_down=float(scores[labels == 0].mean()),
        n_train=split,
        n_test=n - split,
        calibration_points=calibration_curve(scores, labels, n_calibration_bins),
        roc_points=roc_curve(scores, labels),
        probability_histogram=probability_histogram(scores, labels),
        feature_importance=importances,
        grouped_importance=grouped_importance(importances),
    )
    logger.info(f"홀드아웃 평가: auc={report.auc:.4f}, accuracy={report.accuracy:.4f}, n_test={report.n_test}")
    return report


def evaluate_forest(
    matrix: FeatureMatrix,
    config: ForestConfig,
    n_folds: int = 5,
    test_fraction: float = 0.2,
    n_calibration_bins: int = 10,
    with_cv: bool = True,
) -> EvalReport:
    """홀드아웃 + walk-forward 교차검증을 합친 전체 리포트 (with_cv=False면 홀드아웃만)"""
    report = holdout_evaluate(matrix, config, test_fraction, n_calibration_bins)
    if not with_cv:
        return report
    cv = cross_validate(matrix, config, n_folds)
    return report.model_copy(update=cv.model_dump())
