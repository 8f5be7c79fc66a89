"""
분봉 요약 통계

변수별 평균 / 표준편차 / 최소 / 25% / 75% / 최대와
로그수익률의 왜도, 초과첨도를 계산합니다.
JSON 키는 close, volume, log_returns, spread_proxy, num_ticks 입니다.
"""

import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy import stats

from microtree.errors import InsufficientDataError
from microtree.market.bars import BarSeries
from microtree.market.synthesizer import SessionTemplate
from microtree.types import MaybeFloat, UndefinedValue

logger = logging.getLogger(__name__)

# 분산이 이 값 이하이면 왜도/첨도를 정의하지 않음
ZERO_VARIANCE_TOL = 1e-30
DEFAULT_MINUTES_PER_YEAR = 252 * 390


class VariableStats(BaseModel):
    """단일 변수 요약"""

    model_config = ConfigDict(frozen=True)

    mean: float
    std: float = Field(description="표본 표준편차 (ddof=1)")
    min: float
    p25: float
    p75: float
    max: float

    @computed_field  # type: ignore[misc]
    @property
    def range(self) -> float:
        return self.max - self.min

    @classmethod
    def from_values(cls, values: np.ndarray) -> "VariableStats":
        values = np.asarray(values, dtype="float64")
        std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        p25, p75 = np.percentile(values, [25, 75])
        return cls(
            mean=float(np.mean(values)),
            std=std,
            min=float(np.min(values)),
            p25=float(p25),
            p75=float(p75),
            max=float(np.max(values)),
        )


class SummaryStats(BaseModel):
    """분봉 요약 통계"""

    model_config = ConfigDict(frozen=True)

    close: VariableStats
    volume: VariableStats
    log_returns: VariableStats
    spread_proxy: VariableStats
    num_ticks: VariableStats
    skewness: MaybeFloat = Field(description="로그수익률 왜도 (0분산이면 undefined)")
    excess_kurtosis: MaybeFloat = Field(description="로그수익률 첨도 - 3 (0분산이면 undefined)")
    n_bars: int
    n_returns: int


def log_returns(series: BarSeries, include_overnight: bool = True) -> np.ndarray:
    """
    연속 분봉 간 로그수익률 ln(C_t / C_{t-1})

    Args:
        series: 분봉 시퀀스
        include_overnight: False면 1분보다 큰 간격(세션 경계)을 건너는 수익률 제외
    """
    closes = series.column("close")
    returns = np.log(closes[1:] / closes[:-1])
    if include_overnight:
        return returns
    stamps = series.frame["timestamp"].dt.tz_convert(None).to_numpy().astype("datetime64[s]").astype("int64")
    gaps = np.diff(stamps)
    return returns[gaps <= 60]


def summarize(series: BarSeries, include_overnight: bool = True) -> SummaryStats:
    """
    요약 통계 계산

    Raises:
        InsufficientDataError: 분봉이 2개 미만이거나 사용할 수익률이 없는 경우
    """
    if len(series) < 2:
        raise InsufficientDataError(f"요약 통계에는 분봉 2개 이상이 필요합니다 (입력: {len(series)})")

    returns = log_returns(series, include_overnight=include_overnight)
    if returns.size == 0:
        raise InsufficientDataError("세션 내부 수익률이 없습니다")

    closes = series.column("close")
    spread = (series.column("high") - series.column("low")) / closes

    variance = float(np.var(returns))
    if variance <= ZERO_VARIANCE_TOL:
        skewness: MaybeFloat = UndefinedValue(reason="zero_variance")
        excess_kurtosis: MaybeFloat = UndefinedValue(reason="zero_variance")
    else:
        skewness = float(stats.skew(returns))
        # fisher=True → 정규분포 0 (= 첨도 - 3)
        excess_kurtosis = float(stats.kurtosis(returns, fisher=True))

    summary = SummaryStats(
        close=VariableStats.from_values(closes),
        volume=VariableStats.from_values(series.column("volume")),
        log_returns=VariableStats.from_values(returns),
        spread_proxy=VariableStats.from_values(spread),
        num_ticks=VariableStats.from_values(series.column("num_ticks")),
        skewness=skewness,
        excess_kurtosis=excess_kurtosis,
        n_bars=len(series),
        n_returns=int(returns.size),
    )
    logger.info(f"요약 통계 계산 완료: n_bars={summary.n_bars}, n_returns={summary.n_returns}")
    return summary


def historical_volatility(
    series: BarSeries,
    minutes_per_year: float = DEFAULT_MINUTES_PER_YEAR,
    include_overnight: bool = True,
) -> float:
    """분 수익률 표준편차를 연율화한 역사적 변동성"""
    returns = log_returns(series, include_overnight=include_overnight)
    if returns.size < 2:
        raise InsufficientDataError("역사적 변동성에는 수익률 2개 이상이 필요합니다")
    return float(np.std(returns, ddof=1) * np.sqrt(minutes_per_year))


def intraday_volume_profile(series: BarSeries, session: SessionTemplate) -> pd.DataFrame:
    """
    장중 분별 평균 거래량 (U자형 패턴 확인용)

    Returns:
        DataFrame[minute_of_session, mean_volume, n_bars]
    """
    minute = session.minute_of_session(series.timestamps)
    frame = pd.DataFrame({"minute_of_session": minute, "volume": series.column("volume")})
    frame = frame[(frame["minute_of_session"] >= 0) & (frame["minute_of_session"] < session.minutes)]
    grouped = frame.groupby("minute_of_session")["volume"]
    profile = pd.DataFrame({"mean_volume": grouped.mean(), "n_bars": grouped.size()}).reset_index()
    return profile
