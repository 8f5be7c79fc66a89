"""
Features Module

분봉 → 17차원 미시구조 피처 행렬 (피처 맵 φ)
"""

from .microstructure import (
    FEATURE_FAMILIES,
    FEATURE_NAMES,
    FeatureMatrix,
    FeatureRow,
    build_features,
    dump_features,
    order_flow_imbalance,
    session_indicator,
    spread_proxy,
)

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_FAMILIES",
    "FeatureRow",
    "FeatureMatrix",
    "spread_proxy",
    "order_flow_imbalance",
    "session_indicator",
    "build_features",
    "dump_features",
]
