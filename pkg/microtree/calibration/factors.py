"""
상태별 이동 팩터와 MMM 위험중립 확률

- solve_factors: 조건부 평균/분산을 맞추는 (u, d) 닫힌 해
    ln u = μ + σ√((1-p)/p),  ln d = μ - σ√(p/(1-p))
- scale_factors: 분 단위 → 트리 스텝 단위 (μ는 선형, σ는 √시간)
- mmm_probability: p = (e^{rΔt} - d) / (u - d)
- calibrate_state: 마팅게일 제약을 만족하는 (u, d) 1-모수 족에서
    w1·KL(p_MMM‖p_RF) + w2·((σ²_model - σ²)/σ²)² 최소화
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize_scalar
from scipy.special import rel_entr

from microtree.errors import (
    ArbitrageViolationError,
    CalibrationError,
    ConfigError,
    DegenerateProbabilityError,
    DegenerateVolatilityError,
    DomainError,
)

logger = logging.getLogger(__name__)

# 목적함수가 이 값 이하이면 모멘트 매칭 해를 그대로 사용
OBJECTIVE_TOL = 1e-14
GRID_POINTS = 2001
SEARCH_SIGMAS = 6.0
BRACKET_MARGIN = 1e-8
MAX_LOG_FACTOR = 50.0
MAX_EXPANSIONS = 20
REFINE_XATOL = 1e-12
BOUNDARY_ATOL = 1e-15


class MarketState(BaseModel):
    """
    시장 상태 하나의 캘리브레이션 결과

    u, d, mu, sigma2는 dt(연 단위 스텝 길이) 기준입니다.
    p_mmm / kl은 calibrate_state 이후에만 채워집니다.
    """

    model_config = ConfigDict(frozen=True)

    state_id: int = Field(default=0, ge=0)
    p_rf: float = Field(ge=0.0, le=1.0, description="포레스트 상승 확률 (물리 측도)")
    mu: float = Field(description="스텝당 조건부 평균 로그수익률")
    sigma2: float = Field(ge=0.0, description="스텝당 조건부 로그수익률 분산")
    u: float = Field(gt=0.0, description="상승 팩터")
    d: float = Field(gt=0.0, description="하락 팩터")
    dt: float = Field(gt=0.0, description="팩터가 적용되는 스텝 길이 (년)")
    p_mmm: Optional[float] = Field(default=None, description="위험중립 상승 확률")
    kl: Optional[float] = Field(default=None, description="D(p_mmm‖p_rf), 무한대 가능")
    objective: Optional[float] = Field(default=None, description="캘리브레이션 목적함수 값")
    optimized: bool = Field(default=False, description="탐색으로 팩터가 바뀌었는지")
    implied_vol_step: Optional[float] = None
    implied_vol_minute: Optional[float] = None
    implied_vol_annual: Optional[float] = None
    n_samples: int = Field(default=0, ge=0)
    bin_lower: float = 0.0
    bin_upper: float = 1.0
    sparse: bool = Field(default=False, description="표본 부족으로 전체 모멘트를 사용했는지")
    scaling_applied: bool = False

    @property
    def bin_center(self) -> float:
        return (self.bin_lower + self.bin_upper) / 2.0

    @property
    def abs_prob_diff(self) -> Optional[float]:
        return None if self.p_mmm is None else abs(self.p_rf - self.p_mmm)

    def growth(self, r: float) -> float:
        return math.exp(r * self.dt)


# ============================================================================
# 닫힌 해 / 스케일링
# ============================================================================


def solve_factors(p: float, mu: float, sigma2: float) -> Tuple[float, float]:
    """
    모멘트 매칭 (u, d)

    Raises:
        DegenerateProbabilityError: p ∉ (0, 1)
        DegenerateVolatilityError: sigma2 <= 0
    """
    if not 0.0 < p < 1.0:
        raise DegenerateProbabilityError(f"확률이 (0, 1) 밖이라 팩터를 풀 수 없습니다: p={p}")
    if not sigma2 > 0.0:
        raise DegenerateVolatilityError(f"분산이 0이라 팩터를 풀 수 없습니다: sigma2={sigma2}")
    sigma = math.sqrt(sigma2)
    ln_u = mu + sigma * math.sqrt((1.0 - p) / p)
    ln_d = mu - sigma * math.sqrt(p / (1.0 - p))
    return math.exp(ln_u), math.exp(ln_d)


def scale_factors(state: MarketState, dt_from: float, dt_to: float) -> MarketState:
    """
    스텝 길이 변경: μ × ρ, σ × √ρ (ρ = dt_to / dt_from) 후 p_rf로 재풀이

    Raises:
        DomainError: dt가 양수가 아님
    """
    if not (dt_from > 0.0 and dt_to > 0.0):
        raise DomainError(f"스텝 길이는 양수여야 합니다: dt_from={dt_from}, dt_to={dt_to}")
    rho = dt_to / dt_from
    mu = state.mu * rho
    sigma2 = state.sigma2 * rho
    u, d = solve_factors(state.p_rf, mu, sigma2)
    return state.model_copy(
        update={
            "mu": mu,
            "sigma2": sigma2,
            "u": u,
            "d": d,
            "dt": state.dt * rho,
            "p_mmm": None,
            "kl": None,
            "objective": None,
            "optimized": False,
            "scaling_applied": rho != 1.0,
        }
    )


# ============================================================================
# 위험중립 확률 / KL
# ============================================================================


def mmm_probability(u: float, d: float, r: float, dt: float, state_id: Optional[int] = None) -> float:
    """
    p_MMM = (e^{rΔt} - d) / (u - d)

    e^{rΔt}가 정확히 d 또는 u이면 0 / 1을 반환하고 경고를 남깁니다.

    Raises:
        DomainError: u > d > 0 위반
        ArbitrageViolationError: e^{rΔt} ∉ [d, u]
    """
    if not (u > d > 0.0):
        raise DomainError(f"u > d > 0 이어야 합니다: u={u}, d={d}")
    growth = math.exp(r * dt)
    if math.isclose(growth, d, rel_tol=0.0, abs_tol=BOUNDARY_ATOL):
        logger.warning(f"무차익 경계: e^(rΔt) = d (state={state_id}), p_MMM = 0")
        return 0.0
    if math.isclose(growth, u, rel_tol=0.0, abs_tol=BOUNDARY_ATOL):
        logger.warning(f"무차익 경계: e^(rΔt) = u (state={state_id}), p_MMM = 1")
        return 1.0
    if not d < growth < u:
        raise ArbitrageViolationError(
            f"무차익 조건 위반 (state={state_id}): d={d:.10g}, e^(rΔt)={growth:.10g}, u={u:.10g}",
            state_id=state_id,
        )
    return (growth - d) / (u - d)


def kl_divergence_bernoulli(p: float, q: float) -> float:
    """
    D(p‖q) = p·ln(p/q) + (1-p)·ln((1-p)/(1-q)), 0·ln 0 = 0

    q가 0 또는 1이고 p와 어긋나면 math.inf를 반환합니다.

    Raises:
        DomainError: p, q ∉ [0, 1]
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise DomainError(f"확률은 [0, 1] 범위여야 합니다: p={p}, q={q}")
    value = float(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))
    return max(value, 0.0)


def model_variance(q: float, ln_u: float, ln_d: float) -> float:
    """확률 q의 2점 로그수익률 분산"""
    return q * (1.0 - q) * (ln_u - ln_d) ** 2


# ============================================================================
# 캘리브레이션
# ============================================================================


class _ConstraintFamily:
    """
    x = ln u 로 모수화한 (u, d) 족

    ln d(x) = (μ - p·x)/(1 - p) 이므로 물리 측도 평균은 항상 μ 로 유지되고,
    p_MMM(x) = (e^{rΔt} - d)/(u - d) 로 마팅게일 제약을 만족합니다.
    """

    def __init__(self, p_rf: float, mu: float, sigma2: float, r: float, dt: float, w1: float, w2: float):
        self.p_rf = p_rf
        self.mu = mu
        self.sigma2 = sigma2
        self.growth_log = r * dt
        self.growth = math.exp(self.growth_log)
        self.w1 = w1
        self.w2 = w2

    def ln_d(self, x: np.ndarray) -> np.ndarray:
        return (self.mu - self.p_rf * x) / (1.0 - self.p_rf)

    def bounds(self, x0: float) -> Tuple[float, float]:
        g = self.growth_log
        lower = max(g, (self.mu - (1.0 - self.p_rf) * g) / self.p_rf) + BRACKET_MARGIN
        upper = x0 + SEARCH_SIGMAS * math.sqrt(self.sigma2)
        return lower, upper

    def q(self, x: np.ndarray) -> np.ndarray:
        u = np.exp(x)
        d = np.exp(self.ln_d(x))
        return (self.growth - d) / (u - d)

    def objective(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype="float64")
        q = self.q(x)
        valid = (q > 0.0) & (q < 1.0)
        qc = np.clip(q, 1e-300, 1.0 - 1e-16)
        kl = rel_entr(qc, self.p_rf) + rel_entr(1.0 - qc, 1.0 - self.p_rf)
        var_model = qc * (1.0 - qc) * (x - self.ln_d(x)) ** 2
        rel = (var_model - self.sigma2) / self.sigma2
        value = self.w1 * kl + self.w2 * rel**2
        return np.where(valid, value, np.inf)


def calibrate_state(
    p_rf: float,
    mu: float,
    sigma2: float,
    r: float,
    dt: float,
    w1: float = 1.0,
    w2: float = 1.0,
    state_id: int = 0,
    n_samples: int = 0,
    dt_minute: Optional[float] = None,
) -> MarketState:
    """
    마팅게일 제약하 KL + 분산 오차 최소화

    Args:
        p_rf: 물리 측도 상승 확률
        mu, sigma2: dt 스텝 기준 조건부 모멘트
        r: 무위험 이자율 (연속복리)
        dt: 스텝 길이 (년)
        w1, w2: 목적함수 가중치
        dt_minute: 분봉 하나의 길이 (년), 분 단위 내재변동성 계산용

    Raises:
        ConfigError: 가중치가 음수이거나 둘 다 0
        CalibrationError: 탐색 구간에서 p_MMM ∈ (0, 1) 해가 없음
    """
    if w1 < 0.0 or w2 < 0.0 or (w1 == 0.0 and w2 == 0.0):
        raise ConfigError(f"가중치는 음수가 아니고 둘 다 0일 수 없습니다: w1={w1}, w2={w2}")
    u0, d0 = solve_factors(p_rf, mu, sigma2)
    x0 = math.log(u0)
    family = _ConstraintFamily(p_rf, mu, sigma2, r, dt, w1, w2)

    f0 = float(family.objective(np.array([x0]))[0])
    if f0 <= OBJECTIVE_TOL:
        x_best, f_best, optimized = x0, f0, False
    else:
        lower, upper = family.bounds(x0)
        if not lower < upper:
            raise CalibrationError(
                f"상태 {state_id}: 탐색 구간이 비어 있습니다 (lower={lower:.6g}, upper={upper:.6g})",
                state_id=state_id,
            )
        grid = np.linspace(lower, upper, GRID_POINTS)
        values = family.objective(grid)
        i = int(np.argmin(values))
        # 최소점이 상한에 걸리면 구간 안에 들어올 때까지 상한을 두 배로
        for _ in range(MAX_EXPANSIONS):
            if i < GRID_POINTS - 1 or upper >= MAX_LOG_FACTOR:
                break
            upper = min(lower + 2.0 * (upper - lower), MAX_LOG_FACTOR)
            grid = np.linspace(lower, upper, GRID_POINTS)
            values = family.objective(grid)
            i = int(np.argmin(values))
        if not np.isfinite(values[i]):
            raise CalibrationError(f"상태 {state_id}: p_MMM ∈ (0, 1)인 (u, d)가 없습니다", state_id=state_id)
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, GRID_POINTS - 1)]
        result = minimize_scalar(
            lambda x: float(family.objective(np.array([x]))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": REFINE_XATOL},
        )
        candidates = [(float(values[i]), float(grid[i])), (float(result.fun), float(result.x)), (f0, x0)]
        f_best, x_best = min(candidates)
        optimized = x_best != x0

    u = math.exp(x_best)
    d = math.exp(float(family.ln_d(np.array([x_best]))[0])) if optimized else d0
    q = mmm_probability(u, d, r, dt, state_id=state_id)
    if not 0.0 < q < 1.0:
        raise CalibrationError(f"상태 {state_id}: p_MMM이 경계값입니다 ({q})", state_id=state_id)

    step_vol = math.sqrt(q * (1.0 - q)) * (math.log(u) - math.log(d))
    state = MarketState(
        state_id=state_id,
        p_rf=p_rf,
        mu=mu,
        sigma2=sigma2,
        u=u,
        d=d,
        dt=dt,
        p_mmm=q,
        kl=kl_divergence_bernoulli(q, p_rf),
        objective=f_best,
        optimized=optimized,
        implied_vol_step=step_vol,
        implied_vol_minute=step_vol * math.sqrt(dt_minute / dt) if dt_minute else None,
        implied_vol_annual=step_vol / math.sqrt(dt),
        n_samples=n_samples,
    )
    if optimized:
        logger.debug(f"상태 {state_id} 최적화: objective {f0:.3e} → {f_best:.3e}")
    return state
