"""
상태 매핑 / 상태 전이 규칙

트리 빌더와 Monte Carlo 엔진이 같은 StateTransitionRule 객체를 사용합니다.

- map_state: p_hint가 속한 확률 구간의 상태 (p_hint는 [0, 1]로 잘라냄)
- 자식 p_hint = 부모 상태의 구간 중심 ± ε (상승 +ε, 하락 -ε)
- 이동 이력은 최근 k개 이동을 비트로 보관 (가장 최근 이동 = 최하위 비트)
"""

from typing import TYPE_CHECKING, Literal, Tuple, Union

import numpy as np

from microtree.calibration.states import StateTable, state_of
from microtree.errors import ConfigError

if TYPE_CHECKING:
    from microtree.lattice.builder import TreeNode

UP = 1
DOWN = 0
DEFAULT_HISTORY_LENGTH = 5

Move = Union[int, Literal["up", "down", "u", "d"]]


def move_bit(move: Move) -> int:
    if move in (UP, "up", "u"):
        return UP
    if move in (DOWN, "down", "d"):
        return DOWN
    raise ConfigError(f"이동은 up / down 이어야 합니다: {move!r}")


def map_state(p_hint: float, table: StateTable) -> int:
    """p_hint가 속한 구간의 상태 id (구간 중심이 가장 가까운 상태와 동일)"""
    return state_of(p_hint, table.n_bins)


def push_history(bits: np.ndarray, length: np.ndarray, move: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """이력에 이동 추가, k개를 넘으면 가장 오래된 이동을 버림"""
    mask = (1 << k) - 1
    new_bits = ((bits << 1) | move) & mask
    new_length = np.minimum(length + 1, k)
    return new_bits, new_length


def decode_history(bits: int, length: int) -> Tuple[str, ...]:
    """비트 이력 → ("u", "d", ...) 오래된 순"""
    return tuple("u" if (bits >> (length - 1 - i)) & 1 else "d" for i in range(length))


def encode_history(history: Tuple[str, ...]) -> Tuple[int, int]:
    bits = 0
    for move in history:
        bits = (bits << 1) | move_bit(move)
    return bits, len(history)


class StateTransitionRule:
    """
    상태 전이 함수 f: S × {u, d} → S

    상태별 (u, d, p_mmm)을 배열로 보관해 벡터화된 전이를 제공합니다.
    """

    def __init__(self, table: StateTable, epsilon: float = 0.0, history_length: int = DEFAULT_HISTORY_LENGTH):
        if history_length < 1:
            raise ConfigError(f"history_length는 1 이상이어야 합니다: {history_length}")
        if epsilon < 0.0:
            raise ConfigError(f"epsilon은 0 이상이어야 합니다: {epsilon}")
        self.table = table
        self.epsilon = epsilon
        self.history_length = history_length
        self.u = np.array([s.u for s in table.states], dtype="float64")
        self.d = np.array([s.d for s in table.states], dtype="float64")
        self.p_up = np.array([s.p_mmm for s in table.states], dtype="float64")
        centers = (np.arange(table.n_bins) + 0.5) / table.n_bins
        # (상태, 이동) → 다음 상태 룩업 테이블
        self._next = np.stack(
            [
                np.asarray(state_of(centers - epsilon, table.n_bins)),
                np.asarray(state_of(centers + epsilon, table.n_bins)),
            ],
            axis=1,
        )

    @property
    def growth(self) -> float:
        return self.table.growth

    def root_state(self, p_hint: float) -> int:
        return map_state(p_hint, self.table)

    def child_hint(self, state_id: int, move: Move) -> float:
        center = (state_id + 0.5) / self.table.n_bins
        return center + self.epsilon if move_bit(move) == UP else center - self.epsilon

    def next_state(self, state_id: int, move: Move) -> int:
        return int(self._next[state_id, move_bit(move)])

    def next_states(self, state_ids: np.ndarray, moves: np.ndarray) -> np.ndarray:
        """벡터화된 전이 (moves: 1 = 상승, 0 = 하락)"""
        return self._next[state_ids, moves]

    def push(self, bits: np.ndarray, length: np.ndarray, moves: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return push_history(bits, length, moves, self.history_length)


def transition_state(
    node: "TreeNode",
    move: Move,
    table: StateTable,
    epsilon: float = 0.0,
    history_length: int = DEFAULT_HISTORY_LENGTH,
) -> Tuple[int, Tuple[str, ...]]:
    """
    한 번의 이동 후 (다음 상태, 새 이력)

    Args:
        node: 현재 노드 (state_id, history 사용)
        move: up / down
    """
    rule = StateTransitionRule(table, epsilon=epsilon, history_length=history_length)
    bit = move_bit(move)
    new_history = (tuple(node.history) + ("u" if bit == UP else "d",))[-history_length:]
    return rule.next_state(node.state_id, bit), new_history
