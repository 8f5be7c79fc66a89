"""
레벨 단위 상태 집계 (비재결합 트리의 노드 수 제한)

거리 d(i, j) = w_price·|S_i - S_j| + w_hist·Hamming(h_i, h_j) 가 가장 작은 쌍부터
탐욕적으로 병합합니다. 동률이면 낮은 노드 id 쌍이 먼저입니다.

병합 노드:
- 확률 질량 = 합
- 가격 = 질량 가중 평균 (Σ 질량·가격 보존)
- 상태 / 이력 = 질량이 큰 쪽 (동률이면 낮은 id)
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from microtree.errors import ConfigError

logger = logging.getLogger(__name__)


class LevelNodes(BaseModel):
    """한 레벨의 노드 속성 배열"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    price: np.ndarray
    state: np.ndarray
    hist_bits: np.ndarray
    hist_len: np.ndarray
    mass: np.ndarray

    def __len__(self) -> int:
        return int(self.price.size)

    def take(self, idx: np.ndarray) -> "LevelNodes":
        return LevelNodes(
            price=self.price[idx],
            state=self.state[idx],
            hist_bits=self.hist_bits[idx],
            hist_len=self.hist_len[idx],
            mass=self.mass[idx],
        )


def hamming(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """최근 k개 이동 비트의 해밍 거리"""
    diff = np.bitwise_xor(a, b)
    count = np.zeros(np.broadcast(a, b).shape, dtype=np.int64)
    for bit in range(k):
        count += (diff >> bit) & 1
    return count


def _distance_row(nodes: dict, i: int, w_price: float, w_hist: float, k: int) -> np.ndarray:
    return w_price * np.abs(nodes["price"] - nodes["price"][i]) + w_hist * hamming(
        nodes["hist_bits"], nodes["hist_bits"][i], k
    )


def aggregate_level(
    nodes: LevelNodes,
    max_nodes: int,
    w_price: float = 1.0,
    w_hist: float = 1.0,
    history_length: int = 5,
) -> Tuple[LevelNodes, np.ndarray]:
    """
    노드 수가 max_nodes 이하가 될 때까지 가장 가까운 쌍을 병합

    Returns:
        (병합된 레벨, merge_map), merge_map[원래 인덱스] = 병합 후 인덱스
    """
    if max_nodes < 1:
        raise ConfigError(f"max_nodes는 1 이상이어야 합니다: {max_nodes}")
    n = len(nodes)
    if n <= max_nodes:
        return nodes, np.arange(n)

    work = {
        "price": nodes.price.astype("float64").copy(),
        "state": nodes.state.copy(),
        "hist_bits": nodes.hist_bits.copy(),
        "hist_len": nodes.hist_len.copy(),
        "mass": nodes.mass.astype("float64").copy(),
    }
    owner = np.arange(n)
    alive = np.ones(n, dtype=bool)

    dist = np.empty((n, n), dtype="float64")
    for i in range(n):
        dist[i] = _distance_row(work, i, w_price, w_hist, history_length)
    # 상삼각만 사용 (i < j)
    dist[np.tril_indices(n)] = np.inf

    remaining = n
    while remaining > max_nodes:
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        m_i, m_j = work["mass"][i], work["mass"][j]
        total = m_i + m_j
        if total > 0:
            work["price"][i] = (m_i * work["price"][i] + m_j * work["price"][j]) / total
        else:
            work["price"][i] = (work["price"][i] + work["price"][j]) / 2.0
        if m_j > m_i:
            work["state"][i] = work["state"][j]
            work["hist_bits"][i] = work["hist_bits"][j]
            work["hist_len"][i] = work["hist_len"][j]
        work["mass"][i] = total

        alive[j] = False
        owner[owner == j] = i
        dist[j, :] = np.inf
        dist[:, j] = np.inf

        row = _distance_row(work, i, w_price, w_hist, history_length)
        row[~alive] = np.inf
        row[i] = np.inf
        dist[i, i + 1 :] = row[i + 1 :]
        dist[:i, i] = row[:i]
        remaining -= 1

    survivors = np.flatnonzero(alive)
    position = np.full(n, -1, dtype=np.int64)
    position[survivors] = np.arange(survivors.size)
    merge_map = position[owner]

    merged = LevelNodes(
        price=work["price"][survivors],
        state=work["state"][survivors],
        hist_bits=work["hist_bits"][survivors],
        hist_len=work["hist_len"][survivors],
        mass=work["mass"][survivors],
    )
    logger.debug(f"레벨 집계: {n} → {survivors.size} 노드")
    return merged, merge_map
