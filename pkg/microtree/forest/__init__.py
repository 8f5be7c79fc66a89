"""
Forest Module

직접 구현한 랜덤 포레스트 이진 분류기:
- decision_tree: 지니 분할 결정트리
- ensemble: 학습 / 예측 / 중요도 / 모델 파일
- evaluation: AUC, ROC, 보정 곡선, walk-forward 교차검증
"""

from .decision_tree import DecisionTree, grow_tree
from .ensemble import (
    Forest,
    ForestConfig,
    feature_importance,
    grouped_importance,
    load_forest,
    predict_proba,
    predict_proba_batch,
    save_forest,
    train,
)
from .evaluation import (
    CalibrationPoint,
    CrossValidationResult,
    EvalReport,
    RocPoint,
    calibration_curve,
    classification_metrics,
    cross_validate,
    evaluate_auc,
    evaluate_forest,
    holdout_evaluate,
    roc_curve,
)

__all__ = [
    # Trees
    "DecisionTree",
    "grow_tree",
    # Ensemble
    "ForestConfig",
    "Forest",
    "train",
    "predict_proba",
    "predict_proba_batch",
    "feature_importance",
    "grouped_importance",
    "save_forest",
    "load_forest",
    # Evaluation
    "CalibrationPoint",
    "RocPoint",
    "CrossValidationResult",
    "EvalReport",
    "evaluate_auc",
    "roc_curve",
    "calibration_curve",
    "classification_metrics",
    "cross_validate",
    "holdout_evaluate",
    "evaluate_forest",
]
