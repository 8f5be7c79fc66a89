"""
랜덤 포레스트 분류기 (p_RF = f_RF(φ(s)))

- 부트스트랩 표본 + 노드별 무작위 후보 피처로 지니 결정트리 성장
- 확률 = 트리별 리프 상승 비율의 평균 (다수결 아님)
- 트리별 난수 스트림은 SeedSequence([seed, tree_index])에서 파생하므로
  n_jobs와 무관하게 같은 포레스트가 만들어집니다
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from microtree.errors import (
    ConfigError,
    DegenerateTrainingError,
    DomainError,
    InsufficientDataError,
    MissingArtifactError,
    ParseError,
    ShapeError,
)
from microtree.features.microstructure import FEATURE_FAMILIES, FEATURE_NAMES, FeatureMatrix, FeatureRow
from microtree.forest.decision_tree import DecisionTree, grow_tree

logger = logging.getLogger(__name__)

MODEL_FORMAT = "microtree-forest"
MODEL_VERSION = 1


class ForestConfig(BaseModel):
    """포레스트 하이퍼파라미터"""

    model_config = ConfigDict(frozen=True)

    n_trees: int = Field(default=300, ge=1, description="트리 개수")
    max_depth: int = Field(default=12, ge=0, description="최대 깊이 (0 = 루트 리프)")
    min_samples_leaf: int = Field(default=20, ge=1, description="리프 최소 표본 수")
    features_per_split: int = Field(default=math.ceil(math.sqrt(len(FEATURE_NAMES))), ge=1, description="노드별 후보 피처 수")
    bootstrap: bool = Field(default=True, description="부트스트랩 표본 사용 여부")
    seed: int = Field(default=0, description="난수 시드")
    n_jobs: int = Field(default=1, ge=1, description="병렬 학습 스레드 수 (결과에 영향 없음)")


class Forest(BaseModel):
    """학습된 포레스트 (불변, 스레드 간 공유 가능)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    trees: Tuple[DecisionTree, ...]
    feature_names: Tuple[str, ...] = FEATURE_NAMES
    config: ForestConfig = Field(default_factory=ForestConfig)
    n_samples: int = Field(default=0, ge=0, description="학습 행 수")
    class_balance: float = Field(default=0.5, ge=0.0, le=1.0, description="학습 라벨 중 상승(1) 비율")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Forest):
            return NotImplemented
        return forest_to_dict(self) == forest_to_dict(other)

    __hash__ = None  # type: ignore[assignment]


# ============================================================================
# 학습
# ============================================================================


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """트리별 독립 난수 생성기"""
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def _fit_one(X: np.ndarray, y: np.ndarray, config: ForestConfig, tree_index: int) -> DecisionTree:
    rng = tree_rng(config.seed, tree_index)
    n = y.size
    if config.bootstrap:
        idx = rng.integers(0, n, size=n)
        Xb, yb = X[idx], y[idx]
    else:
        Xb, yb = X, y
    return grow_tree(
        Xb,
        yb,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        features_per_split=config.features_per_split,
        rng=rng,
    )


def train(matrix: FeatureMatrix, config: ForestConfig) -> Forest:
    """
    피처 행렬로 포레스트 학습

    Raises:
        ConfigError: features_per_split가 [1, n_features] 밖
        InsufficientDataError: 행 수 < 2 * min_samples_leaf
        DegenerateTrainingError: 라벨이 한 클래스뿐
    """
    X = matrix.X
    y = matrix.y
    n, p = X.shape
    if not 1 <= config.features_per_split <= p:
        raise ConfigError(f"features_per_split는 1~{p} 범위여야 합니다: {config.features_per_split}")
    if n < 2 * config.min_samples_leaf:
        raise InsufficientDataError(
            f"학습 행 수가 부족합니다: {n} < 2 * min_samples_leaf ({2 * config.min_samples_leaf})"
        )
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise DegenerateTrainingError(f"라벨이 한 클래스뿐입니다 (상승 {n_pos}/{n})")

    logger.info(
        f"포레스트 학습 시작: rows={n}, n_trees={config.n_trees}, max_depth={config.max_depth}, n_jobs={config.n_jobs}"
    )
    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, config, i), range(config.n_trees)))
    else:
        trees = [_fit_one(X, y, config, i) for i in range(config.n_trees)]

    forest = Forest(
        trees=tuple(trees),
        feature_names=matrix.feature_names,
        config=config,
        n_samples=n,
        class_balance=n_pos / n,
    )
    logger.info(f"포레스트 학습 완료: 평균 노드 수={np.mean([t.n_nodes for t in trees]):.1f}")
    return forest


# ============================================================================
# 예측
# ============================================================================


def _as_matrix(forest: Forest, X: Union[np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    arr = np.asarray(X, dtype="float64")
    if arr.ndim != 2 or arr.shape[1] != forest.n_features:
        raise ShapeError(f"입력 차원이 맞지 않습니다: {arr.shape} (피처 {forest.n_features}개 필요)")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise DomainError(f"유한하지 않은 피처 값이 있습니다 (행 {bad})", row=bad)
    return arr


def predict_proba_batch(forest: Forest, X: Union[np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    """행렬 입력에 대한 상승 확률 (트리 평균)"""
    arr = _as_matrix(forest, X)
    total = np.zeros(arr.shape[0], dtype="float64")
    for tree in forest.trees:
        total += tree.predict_value(arr)
    return np.clip(total / len(forest.trees), 0.0, 1.0)


def predict_proba(forest: Forest, x: Union[FeatureRow, np.ndarray, Sequence[float]]) -> float:
    """
    단일 피처 벡터의 상승 확률

    Args:
        forest: 학습된 포레스트
        x: FeatureRow 또는 학습 컬럼 순서의 피처 17개

    Raises:
        ShapeError: 차원 불일치
        DomainError: 비유한 입력
    """
    if isinstance(x, FeatureRow):
        vector = x.predictors()
    else:
        vector = np.asarray(x, dtype="float64")
        if vector.ndim != 1:
            raise ShapeError(f"단일 피처 벡터가 필요합니다: shape={vector.shape}")
    return float(predict_proba_batch(forest, vector.reshape(1, -1))[0])


# ============================================================================
# 피처 중요도
# ============================================================================


def feature_importance(forest: Forest) -> Dict[str, float]:
    """
    평균 지니 감소 중요도 (합 = 1)

    트리별로 정규화한 뒤 평균합니다. 분할이 하나도 없으면 균등 1/p.
    """
    p = forest.n_features
    per_tree = []
    for tree in forest.trees:
        internal = tree.left >= 0
        weights = np.bincount(tree.feature[internal], weights=tree.impurity_decrease[internal], minlength=p)
        total = weights.sum()
        if total > 0:
            per_tree.append(weights / total)
    if not per_tree:
        return {name: 1.0 / p for name in forest.feature_names}
    mean = np.mean(per_tree, axis=0)
    mean = mean / mean.sum()
    return {name: float(w) for name, w in zip(forest.feature_names, mean)}


def grouped_importance(importances: Dict[str, float]) -> Dict[str, float]:
    """피처 그룹별 중요도 합 (returns, spread, volume, volatility, order_flow, time)"""
    grouped: Dict[str, float] = {}
    for name, weight in importances.items():
        family = FEATURE_FAMILIES.get(name, "other")
        grouped[family] = grouped.get(family, 0.0) + weight
    return grouped


# ============================================================================
# 직렬화
# ============================================================================


def forest_to_dict(forest: Forest, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(forest.feature_names),
        "config": forest.config.model_dump(exclude={"n_jobs"}),
        "n_samples": forest.n_samples,
        "class_balance": forest.class_balance,
        "metadata": metadata or {},
        "trees": [tree.to_dict() for tree in forest.trees],
    }


def forest_from_dict(data: Dict[str, Any]) -> Forest:
    if data.get("format") != MODEL_FORMAT:
        raise ParseError(f"모델 파일 형식이 아닙니다: format={data.get('format')!r}")
    if data.get("version") != MODEL_VERSION:
        raise ParseError(f"지원하지 않는 모델 버전입니다: {data.get('version')!r}")
    return Forest(
        trees=tuple(DecisionTree.from_dict(tree) for tree in data["trees"]),
        feature_names=tuple(data["feature_names"]),
        config=ForestConfig(**data["config"]),
        n_samples=data["n_samples"],
        class_balance=data["class_balance"],
    )


def save_forest(forest: Forest, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> None:
    """포레스트를 버전이 붙은 JSON 모델 파일로 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(forest_to_dict(forest, metadata), indent=2), encoding="utf-8")
    logger.info(f"모델 저장 완료: {path} (trees={len(forest.trees)})")


def load_forest(path: Union[str, Path]) -> Forest:
    """JSON 모델 파일 로드"""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"모델 파일을 읽을 수 없습니다: {e}", line=e.lineno) from e
    return forest_from_dict(data)
