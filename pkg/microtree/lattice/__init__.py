"""
Lattice Module

미시구조 강화 이항트리:
- transition: 상태 매핑 / 전이 규칙 (Monte Carlo와 공유)
- aggregation: 레벨 단위 노드 병합
- builder: 트리 구성 / 마팅게일 검증 / JSON 덤프
"""

from .aggregation import LevelNodes, aggregate_level, hamming
from .builder import (
    DEFAULT_NODE_CAP,
    PricingTree,
    TreeNode,
    build_tree,
    dump_tree,
    projected_node_count,
    tree_to_dict,
)
from .transition import (
    DEFAULT_HISTORY_LENGTH,
    StateTransitionRule,
    decode_history,
    encode_history,
    map_state,
    transition_state,
)

__all__ = [
    # Transition
    "DEFAULT_HISTORY_LENGTH",
    "StateTransitionRule",
    "map_state",
    "transition_state",
    "encode_history",
    "decode_history",
    # Aggregation
    "LevelNodes",
    "aggregate_level",
    "hamming",
    # Builder
    "DEFAULT_NODE_CAP",
    "TreeNode",
    "PricingTree",
    "build_tree",
    "projected_node_count",
    "tree_to_dict",
    "dump_tree",
]
