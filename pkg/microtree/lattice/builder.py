"""
미시구조 강화 비재결합 이항트리 구성

노드는 레벨 순서로 연속 저장되는 배열입니다 (레벨 i의 노드 = level_offsets[i]:level_offsets[i+1]).
집계가 없으면 레벨 i의 노드 수는 2^i, 전체 노드 수는 2^{N+1} - 1 입니다.
"""

import json
import logging
import math
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from microtree.calibration.states import StateTable
from microtree.errors import ConfigError, DomainError, ResourceLimitError, SpecMismatchError
from microtree.lattice.aggregation import LevelNodes, aggregate_level
from microtree.lattice.transition import DEFAULT_HISTORY_LENGTH, DOWN, UP, StateTransitionRule, decode_history

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 2**21
# 트리 dt와 상태 테이블 dt 비교 허용 오차 (상대)
DT_RTOL = 1e-9
NO_CHILD = -1


class TreeNode(BaseModel):
    """트리 노드 하나의 읽기 전용 뷰"""

    model_config = ConfigDict(frozen=True)

    node_id: int
    level: int
    price: float = Field(gt=0.0)
    state_id: int
    p_up: float = Field(gt=0.0, lt=1.0, description="상태의 p_mmm")
    up_child: Optional[int] = None
    down_child: Optional[int] = None
    history: Tuple[str, ...] = Field(default=(), description="최근 이동 (오래된 순)")
    mass: float = Field(default=1.0, description="루트에서 이 노드까지의 위험중립 경로 확률")


class PricingTree(BaseModel):
    """가격결정 트리 (불변)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    price: np.ndarray
    state: np.ndarray
    p_up: np.ndarray
    up_child: np.ndarray
    down_child: np.ndarray
    hist_bits: np.ndarray
    hist_len: np.ndarray
    mass: np.ndarray
    level_offsets: np.ndarray
    N: int = Field(ge=1, description="스텝 수")
    dt: float = Field(gt=0.0, description="스텝 길이 (년)")
    r: float
    table: StateTable
    merges_per_level: List[int] = Field(default_factory=list, description="레벨별 병합 횟수")
    build_seconds: float = 0.0

    @property
    def n_nodes(self) -> int:
        return int(self.price.size)

    @property
    def aggregated(self) -> bool:
        return any(self.merges_per_level)

    @property
    def maturity(self) -> float:
        return self.N * self.dt

    def level_slice(self, level: int) -> slice:
        return slice(int(self.level_offsets[level]), int(self.level_offsets[level + 1]))

    def level_sizes(self) -> List[int]:
        return np.diff(self.level_offsets).tolist()

    def node(self, node_id: int) -> TreeNode:
        level = int(np.searchsorted(self.level_offsets, node_id, side="right") - 1)
        up = int(self.up_child[node_id])
        down = int(self.down_child[node_id])
        return TreeNode(
            node_id=node_id,
            level=level,
            price=float(self.price[node_id]),
            state_id=int(self.state[node_id]),
            p_up=float(self.p_up[node_id]),
            up_child=None if up == NO_CHILD else up,
            down_child=None if down == NO_CHILD else down,
            history=decode_history(int(self.hist_bits[node_id]), int(self.hist_len[node_id])),
            mass=float(self.mass[node_id]),
        )

    def nodes(self, level: Optional[int] = None) -> List[TreeNode]:
        ids = range(self.n_nodes) if level is None else range(*self.level_slice(level).indices(self.n_nodes))
        return [self.node(i) for i in ids]

    def terminal_prices(self) -> np.ndarray:
        return self.price[self.level_slice(self.N)]

    def martingale_error(self) -> float:
        """|E[S_N]·e^{-rNΔt} - S0| / S0 (경로 확률 전방 전파)"""
        terminal = self.level_slice(self.N)
        expected = float(np.sum(self.mass[terminal] * self.price[terminal]))
        s0 = float(self.price[0])
        return abs(expected * math.exp(-self.r * self.maturity) - s0) / s0

    def max_local_martingale_error(self) -> float:
        """비말단 노드의 max |p·u + (1-p)·d - e^{rΔt}|"""
        internal = slice(0, int(self.level_offsets[self.N]))
        states = self.state[internal]
        u = np.array([s.u for s in self.table.states])[states]
        d = np.array([s.d for s in self.table.states])[states]
        p = self.p_up[internal]
        growth = math.exp(self.r * self.dt)
        return float(np.max(np.abs(p * u + (1.0 - p) * d - growth)))

    def max_child_price_error(self) -> float:
        """집계가 없을 때 max |S_up - S·u|, |S_down - S·d| (상대)"""
        internal = slice(0, int(self.level_offsets[self.N]))
        states = self.state[internal]
        u = np.array([s.u for s in self.table.states])[states]
        d = np.array([s.d for s in self.table.states])[states]
        parent = self.price[internal]
        up = self.price[self.up_child[internal]]
        down = self.price[self.down_child[internal]]
        return float(max(np.max(np.abs(up / (parent * u) - 1.0)), np.max(np.abs(down / (parent * d) - 1.0))))


def projected_node_count(N: int, max_nodes_per_level: Optional[int] = None) -> int:
    """구성 전 예상 노드 수"""
    if max_nodes_per_level is None:
        return 2 ** (N + 1) - 1
    return sum(min(2**i, max_nodes_per_level) for i in range(N + 1))


def build_tree(
    S0: float,
    N: int,
    r: float,
    dt: float,
    table: StateTable,
    root_p_hint: float = 0.5,
    max_nodes_per_level: Optional[int] = None,
    epsilon: float = 0.0,
    history_length: int = DEFAULT_HISTORY_LENGTH,
    node_cap: int = DEFAULT_NODE_CAP,
    w_price: float = 1.0,
    w_hist: float = 1.0,
) -> PricingTree:
    """
    레벨 단위 트리 구성

    Args:
        S0: 현재 가격
        N: 스텝 수
        r: 무위험 이자율
        dt: 스텝 길이 (년), 상태 테이블의 dt_tree와 같아야 함
        table: 캘리브레이션된 상태 테이블
        root_p_hint: 루트 상태를 고를 확률
        max_nodes_per_level: 레벨 노드 상한 (None이면 집계 안 함)
        epsilon: 자식 p_hint 모멘텀 조정 폭

    Raises:
        ConfigError / DomainError: 잘못된 입력
        SpecMismatchError: 테이블이 다른 dt / r 로 캘리브레이션됨
        ResourceLimitError: 예상 노드 수가 node_cap 초과
    """
    if N < 1:
        raise ConfigError(f"스텝 수는 1 이상이어야 합니다: N={N}")
    if not (S0 > 0.0 and math.isfinite(S0)):
        raise DomainError(f"S0는 양수여야 합니다: {S0}")
    if max_nodes_per_level is not None and max_nodes_per_level < 1:
        raise ConfigError(f"max_nodes_per_level은 1 이상이어야 합니다: {max_nodes_per_level}")
    if not math.isclose(dt, table.dt_tree, rel_tol=DT_RTOL):
        raise SpecMismatchError(f"상태 테이블은 dt={table.dt_tree}로 캘리브레이션됐습니다 (트리 dt={dt})")
    if not math.isclose(r, table.r, rel_tol=DT_RTOL, abs_tol=1e-15):
        raise SpecMismatchError(f"상태 테이블은 r={table.r}로 캘리브레이션됐습니다 (트리 r={r})")
    projected = projected_node_count(N, max_nodes_per_level)
    if projected > node_cap:
        raise ResourceLimitError(f"예상 노드 수 {projected:,}개가 상한 {node_cap:,}개를 넘습니다 (N={N})")

    started = time.perf_counter()
    rule = StateTransitionRule(table, epsilon=epsilon, history_length=history_length)

    level = LevelNodes(
        price=np.array([float(S0)]),
        state=np.array([rule.root_state(root_p_hint)], dtype=np.int64),
        hist_bits=np.zeros(1, dtype=np.int64),
        hist_len=np.zeros(1, dtype=np.int64),
        mass=np.ones(1),
    )
    levels: List[LevelNodes] = [level]
    children: List[Tuple[np.ndarray, np.ndarray]] = []
    merges: List[int] = [0]

    for _ in range(N):
        parent = levels[-1]
        n = len(parent)
        p = rule.p_up[parent.state]
        # 부모 j의 상승 자식 = 2j, 하락 자식 = 2j + 1
        moves = np.tile(np.array([UP, DOWN], dtype=np.int64), n)
        rep_state = np.repeat(parent.state, 2)
        factor = np.where(moves == UP, rule.u[rep_state], rule.d[rep_state])
        bits, length = rule.push(np.repeat(parent.hist_bits, 2), np.repeat(parent.hist_len, 2), moves)
        child = LevelNodes(
            price=np.repeat(parent.price, 2) * factor,
            state=rule.next_states(rep_state, moves),
            hist_bits=bits,
            hist_len=length,
            mass=np.repeat(parent.mass, 2) * np.where(moves == UP, np.repeat(p, 2), np.repeat(1.0 - p, 2)),
        )
        up_idx = np.arange(0, 2 * n, 2)
        down_idx = up_idx + 1
        if max_nodes_per_level is not None and len(child) > max_nodes_per_level:
            before = len(child)
            child, merge_map = aggregate_level(child, max_nodes_per_level, w_price, w_hist, history_length)
            up_idx, down_idx = merge_map[up_idx], merge_map[down_idx]
            merges.append(before - len(child))
        else:
            merges.append(0)
        children.append((up_idx, down_idx))
        levels.append(child)

    sizes = np.array([len(lv) for lv in levels])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    up_child = np.full(offsets[-1], NO_CHILD, dtype=np.int64)
    down_child = np.full(offsets[-1], NO_CHILD, dtype=np.int64)
    for i, (up_idx, down_idx) in enumerate(children):
        lo, hi = offsets[i], offsets[i + 1]
        up_child[lo:hi] = up_idx + offsets[i + 1]
        down_child[lo:hi] = down_idx + offsets[i + 1]

    state = np.concatenate([lv.state for lv in levels])
    tree = PricingTree(
        price=np.concatenate([lv.price for lv in levels]),
        state=state,
        p_up=rule.p_up[state],
        up_child=up_child,
        down_child=down_child,
        hist_bits=np.concatenate([lv.hist_bits for lv in levels]),
        hist_len=np.concatenate([lv.hist_len for lv in levels]),
        mass=np.concatenate([lv.mass for lv in levels]),
        level_offsets=offsets,
        N=N,
        dt=dt,
        r=r,
        table=table,
        merges_per_level=merges,
        build_seconds=time.perf_counter() - started,
    )
    logger.info(
        f"트리 구성 완료: N={N}, nodes={tree.n_nodes:,}, merges={sum(merges)}, "
        f"build={tree.build_seconds:.3f}s"
    )
    return tree


# ============================================================================
# 덤프
# ============================================================================


def tree_to_dict(tree: PricingTree) -> Dict[str, Any]:
    nodes = []
    for i in range(tree.n_nodes):
        node = tree.node(i)
        nodes.append(
            {
                "id": node.node_id,
                "level": node.level,
                "price": node.price,
                "state_id": node.state_id,
                "p_up": node.p_up,
                "up_child": node.up_child,
                "down_child": node.down_child,
                "history": "".join(node.history),
                "mass": node.mass,
            }
        )
    return {
        "N": tree.N,
        "dt": tree.dt,
        "r": tree.r,
        "n_nodes": tree.n_nodes,
        "level_sizes": tree.level_sizes(),
        "merges_per_level": tree.merges_per_level,
        "nodes": nodes,
    }


def dump_tree(tree: PricingTree, path: Optional[Union[str, Path]] = None) -> str:
    """노드별 JSON 덤프 (id, level, price, state_id, p_up, children, history)"""
    text = json.dumps(tree_to_dict(tree), indent=2)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"트리 덤프 저장: {path}")
    return text
