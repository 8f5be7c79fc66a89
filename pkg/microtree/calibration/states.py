"""
시장 상태 테이블

p_RF 등간격 구간 → 상태별 조건부 모멘트 → 팩터 풀이 → 트리 스텝 스케일링 → MMM 캘리브레이션
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import spearmanr

from microtree.calibration.factors import MarketState, calibrate_state, mmm_probability, scale_factors, solve_factors
from microtree.errors import (
    CalibrationError,
    ConfigError,
    DomainError,
    MissingArtifactError,
    ParseError,
    ShapeError,
)
from microtree.market.summary import DEFAULT_MINUTES_PER_YEAR, VariableStats
from microtree.types import MaybeFloat, UndefinedValue, json_float

logger = logging.getLogger(__name__)

TABLE_FORMAT = "microtree-state-table"
SUMMARY_COLUMNS = ("u", "d", "p_rf", "p_mmm", "abs_prob_diff", "implied_vol_annual", "kl", "n_samples")


class StateAssignment(BaseModel):
    """행별 상태 id와 구간 경계"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    state_ids: np.ndarray
    edges: np.ndarray
    n_bins: int

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.state_ids, minlength=self.n_bins)


class StateMoments(BaseModel):
    """상태별 다음 수익률 모멘트"""

    model_config = ConfigDict(frozen=True)

    state_id: int
    mu: float
    sigma2: float = Field(ge=0.0, description="불편 표본분산 (n-1)")
    n: int
    sparse: bool = Field(description="n < min_samples")
    degenerate: bool = Field(description="분산 0")


def state_of(p: Union[float, np.ndarray], n_bins: int) -> Union[int, np.ndarray]:
    """state = min(floor(p·n_bins), n_bins - 1), p는 [0, 1]로 잘라냄"""
    clipped = np.clip(p, 0.0, 1.0)
    ids = np.minimum(np.floor(clipped * n_bins).astype(np.int64), n_bins - 1)
    return int(ids) if np.ndim(ids) == 0 else ids


def bin_states(probs: Sequence[float], n_bins: int = 20) -> StateAssignment:
    """
    확률을 [0, 1] 등간격 구간 상태로 분류 (1.0은 최상위 구간)

    Raises:
        ConfigError: n_bins < 2
        DomainError: 비유한 확률
    """
    if n_bins < 2:
        raise ConfigError(f"n_bins는 2 이상이어야 합니다: {n_bins}")
    p = np.asarray(probs, dtype="float64")
    if not np.all(np.isfinite(p)):
        raise DomainError("유한하지 않은 확률 값이 있습니다")
    return StateAssignment(
        state_ids=np.asarray(state_of(p, n_bins)).reshape(-1),
        edges=np.linspace(0.0, 1.0, n_bins + 1),
        n_bins=n_bins,
    )


def conditional_moments(
    returns: Sequence[float],
    assignments: Union[StateAssignment, Sequence[int]],
    n_bins: Optional[int] = None,
    min_samples: int = 2,
) -> List[StateMoments]:
    """
    상태별 평균 / 불편분산 / 표본 수

    n <= 1 또는 n < min_samples인 상태는 sparse로 표시합니다 (예외 아님).
    """
    r = np.asarray(returns, dtype="float64")
    if isinstance(assignments, StateAssignment):
        ids = assignments.state_ids
        n_bins = assignments.n_bins
    else:
        ids = np.asarray(assignments, dtype=np.int64)
        n_bins = n_bins or (int(ids.max()) + 1 if ids.size else 0)
    if r.shape != ids.shape:
        raise ShapeError(f"수익률과 상태 id 길이가 다릅니다: {r.shape} vs {ids.shape}")

    frame = pd.DataFrame({"state": ids, "r": r})
    grouped = frame.groupby("state")["r"].agg(["mean", "var", "count"])
    moments = []
    for s in range(n_bins):
        if s in grouped.index:
            n = int(grouped.at[s, "count"])
            mu = float(grouped.at[s, "mean"])
            var = float(grouped.at[s, "var"]) if n > 1 else 0.0
        else:
            n, mu, var = 0, 0.0, 0.0
        moments.append(
            StateMoments(
                state_id=s,
                mu=mu,
                sigma2=max(var, 0.0),
                n=n,
                sparse=n <= 1 or n < min_samples,
                degenerate=n > 1 and var <= 0.0,
            )
        )
    return moments


# ============================================================================
# 상태 테이블
# ============================================================================


class StateTableSummary(BaseModel):
    """상태별 팩터 분포 요약"""

    columns: Dict[str, VariableStats]
    corr_p_rf_p_mmm: MaybeFloat = Field(description="p_rf, p_mmm 피어슨 상관")
    spearman_diff_kl: MaybeFloat = Field(description="|p_rf - p_mmm| 와 kl 의 스피어만 상관")
    n_states: int
    n_sparse: int
    n_optimized: int


class StateTable(BaseModel):
    """캘리브레이션된 상태 테이블 (불변)"""

    model_config = ConfigDict(frozen=True)

    states: Tuple[MarketState, ...]
    n_bins: int = Field(ge=1)
    dt_minute: float = Field(gt=0.0, description="분봉 하나의 길이 (년)")
    dt_tree: float = Field(gt=0.0, description="트리 스텝 길이 (년)")
    r: float = Field(description="무위험 이자율 (연속복리)")
    scaling_applied: bool = False
    w1: float = 1.0
    w2: float = 1.0
    min_samples: Optional[int] = None
    minutes_per_year: float = DEFAULT_MINUTES_PER_YEAR

    def state(self, state_id: int) -> MarketState:
        return self.states[state_id]

    def state_for(self, p: float) -> MarketState:
        """확률 p가 속한 구간의 상태"""
        return self.states[state_of(p, self.n_bins)]

    @property
    def growth(self) -> float:
        """스텝당 무위험 성장률 e^{rΔt}"""
        return math.exp(self.r * self.dt_tree)

    @property
    def scaling_ratio(self) -> float:
        return self.dt_tree / self.dt_minute

    @classmethod
    def single_state(cls, u: float, d: float, r: float, dt: float) -> "StateTable":
        """
        상태 하나짜리 테이블 (CRR 동치 트리, Monte Carlo 일관성 검증용)

        p_rf = p_mmm 이므로 kl = 0 입니다.
        """
        q = mmm_probability(u, d, r, dt)
        ln_u, ln_d = math.log(u), math.log(d)
        mu = q * ln_u + (1.0 - q) * ln_d
        sigma2 = q * (1.0 - q) * (ln_u - ln_d) ** 2
        step_vol = math.sqrt(sigma2)
        state = MarketState(
            state_id=0,
            p_rf=q,
            mu=mu,
            sigma2=sigma2,
            u=u,
            d=d,
            dt=dt,
            p_mmm=q,
            kl=0.0,
            objective=0.0,
            implied_vol_step=step_vol,
            implied_vol_minute=step_vol,
            implied_vol_annual=step_vol / math.sqrt(dt),
        )
        return cls(states=(state,), n_bins=1, dt_minute=dt, dt_tree=dt, r=r)

    def to_frame(self) -> pd.DataFrame:
        """성능 표 컬럼명의 상태별 DataFrame"""
        records = []
        for s in self.states:
            records.append(
                {
                    "state_id": s.state_id,
                    "bin_lower": s.bin_lower,
                    "bin_upper": s.bin_upper,
                    "n_samples": s.n_samples,
                    "p_rf": s.p_rf,
                    "p_mmm": s.p_mmm,
                    "abs_prob_diff": s.abs_prob_diff,
                    "u": s.u,
                    "d": s.d,
                    "mu": s.mu,
                    "sigma2": s.sigma2,
                    "implied_vol_step": s.implied_vol_step,
                    "implied_vol_annual": s.implied_vol_annual,
                    "kl": s.kl,
                    "objective": s.objective,
                    "sparse": s.sparse,
                    "optimized": s.optimized,
                }
            )
        return pd.DataFrame.from_records(records)

    def summary(self) -> StateTableSummary:
        """상태별 u, d, p_rf, p_mmm, |Δp|, 내재변동성, kl, 표본 수 분포와 상관계수"""
        frame = self.to_frame()
        columns = {}
        for name in SUMMARY_COLUMNS:
            values = frame[name].to_numpy(dtype="float64")
            values = values[np.isfinite(values)]
            if values.size:
                columns[name] = VariableStats.from_values(values)

        p_rf = frame["p_rf"].to_numpy(dtype="float64")
        p_mmm = frame["p_mmm"].to_numpy(dtype="float64")
        if len(frame) > 1 and np.std(p_rf) > 0 and np.std(p_mmm) > 0:
            corr: MaybeFloat = float(np.corrcoef(p_rf, p_mmm)[0, 1])
        else:
            corr = UndefinedValue(reason="zero_variance")

        diff = frame["abs_prob_diff"].to_numpy(dtype="float64")
        kl = frame["kl"].to_numpy(dtype="float64")
        rho = spearmanr(diff, kl)[0] if len(frame) > 2 else math.nan
        if np.isfinite(rho):
            spearman: MaybeFloat = float(rho)
        else:
            spearman = UndefinedValue(reason="zero_variance")

        return StateTableSummary(
            columns=columns,
            corr_p_rf_p_mmm=corr,
            spearman_diff_kl=spearman,
            n_states=len(self.states),
            n_sparse=int(frame["sparse"].sum()),
            n_optimized=int(frame["optimized"].sum()),
        )


def calibrate_all(
    probs: Sequence[float],
    returns: Sequence[float],
    r: float,
    dt_minute: float,
    dt_tree: float,
    n_bins: int = 20,
    w1: float = 1.0,
    w2: float = 1.0,
    min_samples: Union[int, float] = 30,
) -> StateTable:
    """
    상태별 bin → moments → solve → scale → calibrate

    표본이 min_samples 미만이거나 분산이 0인 상태는 전체 표본의 확률 평균과
    모멘트를 사용하므로 그런 상태들은 모두 같은 팩터를 가집니다.

    Raises:
        ShapeError: probs / returns 길이 불일치
        CalibrationError: 전체 표본으로도 캘리브레이션할 수 없음
    """
    p = np.asarray(probs, dtype="float64")
    ret = np.asarray(returns, dtype="float64")
    if p.shape != ret.shape:
        raise ShapeError(f"확률과 수익률 길이가 다릅니다: {p.shape} vs {ret.shape}")
    if not (dt_minute > 0.0 and dt_tree > 0.0):
        raise DomainError(f"스텝 길이는 양수여야 합니다: dt_minute={dt_minute}, dt_tree={dt_tree}")

    assignment = bin_states(p, n_bins)
    threshold = math.inf if math.isinf(min_samples) else int(min_samples)
    moments = conditional_moments(ret, assignment, min_samples=2)

    if p.size < 2:
        raise CalibrationError(f"전체 표본이 부족해 캘리브레이션할 수 없습니다: rows={p.size}")
    pooled_p = float(p.mean())
    pooled_mu = float(ret.mean())
    pooled_var = float(ret.var(ddof=1))
    if not 0.0 < pooled_p < 1.0 or not pooled_var > 0.0:
        raise CalibrationError(f"전체 표본이 퇴화했습니다: p={pooled_p}, sigma2={pooled_var}")

    def build(state_id: int, p_rf: float, mu: float, sigma2: float, n: int, sparse: bool) -> MarketState:
        u, d = solve_factors(p_rf, mu, sigma2)
        minute = MarketState(
            state_id=state_id,
            p_rf=p_rf,
            mu=mu,
            sigma2=sigma2,
            u=u,
            d=d,
            dt=dt_minute,
            n_samples=n,
            bin_lower=float(assignment.edges[state_id]),
            bin_upper=float(assignment.edges[state_id + 1]),
            sparse=sparse,
        )
        scaled = scale_factors(minute, dt_minute, dt_tree)
        calibrated = calibrate_state(
            scaled.p_rf,
            scaled.mu,
            scaled.sigma2,
            r,
            dt_tree,
            w1=w1,
            w2=w2,
            state_id=state_id,
            n_samples=n,
            dt_minute=dt_minute,
        )
        return calibrated.model_copy(
            update={
                "bin_lower": minute.bin_lower,
                "bin_upper": minute.bin_upper,
                "sparse": sparse,
                "scaling_applied": scaled.scaling_applied,
            }
        )

    states = []
    for m in moments:
        mask = assignment.state_ids == m.state_id
        p_state = float(p[mask].mean()) if m.n else math.nan
        usable = m.n >= threshold and not m.sparse and not m.degenerate and 0.0 < p_state < 1.0
        if usable:
            state = build(m.state_id, p_state, m.mu, m.sigma2, m.n, sparse=False)
        else:
            state = build(m.state_id, pooled_p, pooled_mu, pooled_var, m.n, sparse=True)
        states.append(state)

    table = StateTable(
        states=tuple(states),
        n_bins=n_bins,
        dt_minute=dt_minute,
        dt_tree=dt_tree,
        r=r,
        scaling_applied=dt_tree != dt_minute,
        w1=w1,
        w2=w2,
        min_samples=None if math.isinf(threshold) else int(threshold),
        minutes_per_year=1.0 / dt_minute,
    )
    n_sparse = sum(s.sparse for s in states)
    logger.info(
        f"상태 캘리브레이션 완료: states={n_bins}, sparse={n_sparse}, "
        f"optimized={sum(s.optimized for s in states)}, ratio={dt_tree / dt_minute:.1f}"
    )
    return table


# ============================================================================
# 직렬화
# ============================================================================


def _state_record(state: MarketState) -> Dict[str, Any]:
    record = state.model_dump()
    record["kl"] = None if state.kl is None else json_float(state.kl)
    record["bin_center"] = state.bin_center
    record["abs_prob_diff"] = state.abs_prob_diff
    return record


def state_table_to_dict(table: StateTable) -> Dict[str, Any]:
    meta = table.model_dump(exclude={"states"})
    return {"format": TABLE_FORMAT, **meta, "states": [_state_record(s) for s in table.states]}


def save_state_table(table: StateTable, path: Union[str, Path]) -> None:
    """상태 테이블 JSON 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(state_table_to_dict(table), indent=2), encoding="utf-8")
    logger.info(f"상태 테이블 저장 완료: {path}")


def load_state_table(path: Union[str, Path]) -> StateTable:
    """상태 테이블 JSON 로드"""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"상태 테이블 파일을 읽을 수 없습니다: {e}", line=e.lineno) from e
    if data.pop("format", None) != TABLE_FORMAT:
        raise ParseError("상태 테이블 파일 형식이 아닙니다")
    states = []
    for record in data.pop("states"):
        record.pop("bin_center", None)
        record.pop("abs_prob_diff", None)
        if isinstance(record.get("kl"), str):
            record["kl"] = float(record["kl"])
        states.append(MarketState(**record))
    return StateTable(states=tuple(states), **data)
