"""
지니 불순도 기반 이진 결정트리 (랜덤 포레스트 구성 요소)

노드는 배열로 저장합니다 (노드 id = 생성 순서, 루트 = 0):
- feature[i]: 분할 피처 인덱스 (리프는 -1)
- threshold[i]: x[feature] <= threshold 이면 왼쪽
- left[i], right[i]: 자식 노드 id (리프는 -1)
- value[i]: 노드 표본의 상승(라벨 1) 비율
- n_samples[i]: 노드 표본 수
- impurity_decrease[i]: n_node * (노드 지니 - 가중 자식 지니), 리프는 0

분할 후보 동률은 낮은 피처 인덱스, 낮은 임계값 순으로 선택합니다.
"""

from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

LEAF = -1
# 불순도 감소가 이 값 이하이면 분할하지 않음
MIN_GAIN = 1e-12


class DecisionTree(BaseModel):
    """학습된 결정트리 (배열 표현)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray

    @classmethod
    def leaf(cls, value: float, n_samples: int = 0) -> "DecisionTree":
        """루트 하나뿐인 트리"""
        return cls(
            feature=np.array([LEAF]),
            threshold=np.array([0.0]),
            left=np.array([LEAF]),
            right=np.array([LEAF]),
            value=np.array([float(value)]),
            n_samples=np.array([n_samples]),
            impurity_decrease=np.array([0.0]),
        )

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """각 행이 도달하는 리프 노드 id"""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.left[node] != LEAF
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.left[node] != LEAF
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> Dict[str, List[Any]]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity_decrease": self.impurity_decrease.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, List[Any]]) -> "DecisionTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype="float64"),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype="float64"),
            n_samples=np.asarray(data["n_samples"], dtype=np.int64),
            impurity_decrease=np.asarray(data["impurity_decrease"], dtype="float64"),
        )


def gini(n_pos: float, n: float) -> float:
    """이진 지니 불순도 2p(1-p)"""
    if n <= 0:
        return 0.0
    p = n_pos / n
    return 2.0 * p * (1.0 - p)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    features: np.ndarray,
    min_samples_leaf: int,
) -> Tuple[int, float, float]:
    """
    후보 피처 중 가중 지니가 최소인 분할 탐색

    Args:
        X: 노드 표본 피처 (n x p)
        y: 노드 표본 라벨 (0/1)
        features: 후보 피처 인덱스 (오름차순)
        min_samples_leaf: 자식 최소 표본 수

    Returns:
        (feature, threshold, weighted_impurity); 분할 불가면 feature = -1
    """
    n = y.size
    best_feature, best_threshold, best_impurity = LEAF, 0.0, np.inf
    positions = np.arange(1, n)
    n_left = positions.astype("float64")
    n_right = n - n_left
    size_ok = (positions >= min_samples_leaf) & (n - positions >= min_samples_leaf)
    if not size_ok.any():
        return best_feature, best_threshold, best_impurity

    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        pos_left = np.cumsum(ys)[:-1].astype("float64")
        pos_right = ys.sum() - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        impurity = (n_left * 2.0 * p_l * (1.0 - p_l) + n_right * 2.0 * p_r * (1.0 - p_r)) / n
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if impurity[i] < best_impurity:
            lo, hi = xs[i], xs[i + 1]
            threshold = lo + (hi - lo) / 2.0
            if threshold >= hi:
                threshold = lo
            best_feature, best_threshold, best_impurity = int(f), float(threshold), float(impurity[i])

    return best_feature, best_threshold, best_impurity


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_leaf: int,
    features_per_split: int,
    rng: np.random.Generator,
) -> DecisionTree:
    """
    재귀적 지니 분할로 트리 성장 (스택 기반 전위 순회)

    성장 중단: max_depth 도달, 표본 < 2*min_samples_leaf, 순수 노드, 유효 분할 없음
    """
    n_features = X.shape[1]
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    n_samples: List[int] = []
    decrease: List[float] = []

    def new_node(idx: np.ndarray) -> int:
        node_id = len(feature)
        n_pos = float(y[idx].sum())
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(n_pos / idx.size if idx.size else 0.0)
        n_samples.append(int(idx.size))
        decrease.append(0.0)
        return node_id

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        n = idx.size
        n_pos = float(y[idx].sum())
        parent_impurity = gini(n_pos, n)
        if depth >= max_depth or n < 2 * min_samples_leaf or parent_impurity == 0.0:
            continue

        candidates = np.sort(rng.choice(n_features, size=features_per_split, replace=False))
        f, thr, child_impurity = best_split(X[idx], y[idx], candidates, min_samples_leaf)
        if f == LEAF or parent_impurity - child_impurity <= MIN_GAIN:
            continue

        mask = X[idx, f] <= thr
        left_idx, right_idx = idx[mask], idx[~mask]
        feature[node_id] = f
        threshold[node_id] = thr
        decrease[node_id] = n * (parent_impurity - child_impurity)
        left_id = new_node(left_idx)
        right_id = new_node(right_idx)
        left[node_id] = left_id
        right[node_id] = right_id
        # 오른쪽을 먼저 넣어 왼쪽부터 전개
        stack.append((right_id, right_idx, depth + 1))
        stack.append((left_id, left_idx, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype="float64"),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype="float64"),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        impurity_decrease=np.asarray(decrease, dtype="float64"),
    )
