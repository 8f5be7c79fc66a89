"""
Calibration Module

상태별 팩터 캘리브레이션:
- factors: 모멘트 매칭 팩터, 시간 스케일링, MMM 확률, KL, 상태 캘리브레이션
- states: 확률 구간 상태, 조건부 모멘트, 상태 테이블
"""

from .factors import (
    MarketState,
    calibrate_state,
    kl_divergence_bernoulli,
    mmm_probability,
    model_variance,
    scale_factors,
    solve_factors,
)
from .states import (
    StateAssignment,
    StateMoments,
    StateTable,
    StateTableSummary,
    bin_states,
    calibrate_all,
    conditional_moments,
    load_state_table,
    save_state_table,
    state_of,
)

__all__ = [
    # Factors
    "MarketState",
    "solve_factors",
    "scale_factors",
    "mmm_probability",
    "kl_divergence_bernoulli",
    "model_variance",
    "calibrate_state",
    # States
    "StateAssignment",
    "StateMoments",
    "StateTable",
    "StateTableSummary",
    "state_of",
    "bin_states",
    "conditional_moments",
    "calibrate_all",
    "save_state_table",
    "load_state_table",
]
