"""
미시구조 피처 엔지니어링 (피처 맵 φ)

BarSeries → 17차원 피처 행렬 + 상승/하락 라벨.
행 t의 피처는 t 시점까지의 분봉만 사용하고, 라벨은 t→t+1 로그수익률의 부호입니다.

컬럼 순서 (모델 파일과 중요도가 이 순서에 의존):
    returns_lag_1..5, spread_proxy, spread_lag_1, spread_change,
    volume_ratio, volume_relative, tick_intensity,
    realized_vol_5m, price_range_norm, ofi,
    hour, minute, session_indicator
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from microtree.errors import ConfigError, DomainError, InsufficientDataError
from microtree.market.bars import Bar, BarSeries
from microtree.market.synthesizer import SessionTemplate

logger = logging.getLogger(__name__)

FEATURE_NAMES: Tuple[str, ...] = (
    "returns_lag_1",
    "returns_lag_2",
    "returns_lag_3",
    "returns_lag_4",
    "returns_lag_5",
    "spread_proxy",
    "spread_lag_1",
    "spread_change",
    "volume_ratio",
    "volume_relative",
    "tick_intensity",
    "realized_vol_5m",
    "price_range_norm",
    "ofi",
    "hour",
    "minute",
    "session_indicator",
)

# 그룹별 중요도 합산용
FEATURE_FAMILIES: Dict[str, str] = {
    **{f"returns_lag_{k}": "returns" for k in range(1, 6)},
    "spread_proxy": "spread",
    "spread_lag_1": "spread",
    "spread_change": "spread",
    "volume_ratio": "volume",
    "volume_relative": "volume",
    "tick_intensity": "volume",
    "realized_vol_5m": "volatility",
    "price_range_norm": "volatility",
    "ofi": "order_flow",
    "hour": "time",
    "minute": "time",
    "session_indicator": "time",
}

# 세션 인코딩
SESSION_OPEN_30MIN = 2
SESSION_CLOSE_30MIN = 1
SESSION_MIDDAY = 0


class FeatureRow(BaseModel):
    """단일 시점 피처 벡터 + 라벨"""

    model_config = ConfigDict(frozen=True)

    timestamp: datetime
    returns_lag_1: float
    returns_lag_2: float
    returns_lag_3: float
    returns_lag_4: float
    returns_lag_5: float
    spread_proxy: float = Field(description="(H-L)/C")
    spread_lag_1: float
    spread_change: float
    volume_ratio: float = Field(description="V_t / V_{t-1} (직전 0이면 1.0)")
    volume_relative: float = Field(description="V_t / MA5(V)")
    tick_intensity: float = Field(description="ticks_t / MA5(ticks)")
    realized_vol_5m: float
    price_range_norm: float
    ofi: float = Field(description="최근 5분 sign(r)·V 합 (주)")
    hour: float
    minute: float
    session_indicator: float = Field(description="open_30min=2, close_30min=1, midday=0")
    label: int = Field(ge=0, le=1, description="다음 로그수익률 > 0 이면 1")

    def predictors(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype="float64")


class FeatureMatrix(BaseModel):
    """
    피처 행렬

    frame 컬럼: timestamp, FEATURE_NAMES..., label, next_return
    next_return은 예측 변수가 아니며 상태별 조건부 모멘트 계산에 사용합니다.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    frame: pd.DataFrame
    feature_names: Tuple[str, ...] = FEATURE_NAMES
    warmup: int = Field(default=5, description="최대 lookback 창")

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return self.feature_names == other.feature_names and self.frame.equals(other.frame)

    __hash__ = None  # type: ignore[assignment]

    @property
    def X(self) -> np.ndarray:
        return self.frame.loc[:, list(self.feature_names)].to_numpy(dtype="float64")

    @property
    def y(self) -> np.ndarray:
        return self.frame["label"].to_numpy(dtype="int64")

    @property
    def next_returns(self) -> np.ndarray:
        return self.frame["next_return"].to_numpy(dtype="float64")

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.frame["timestamp"])

    def row(self, i: int) -> FeatureRow:
        record = self.frame.iloc[i]
        values = {name: float(record[name]) for name in self.feature_names}
        return FeatureRow(timestamp=record["timestamp"].to_pydatetime(), label=int(record["label"]), **values)

    @property
    def rows(self) -> List[FeatureRow]:
        return [self.row(i) for i in range(len(self))]

    def subset(self, indices: np.ndarray) -> "FeatureMatrix":
        """행 부분집합 (교차검증 fold 등)"""
        return FeatureMatrix(
            frame=self.frame.iloc[indices].reset_index(drop=True),
            feature_names=self.feature_names,
            warmup=self.warmup,
        )

    def with_labels(self, labels: np.ndarray) -> "FeatureMatrix":
        """라벨만 교체한 복사본 (라벨 셔플 검증용)"""
        frame = self.frame.copy()
        frame["label"] = np.asarray(labels, dtype="int64")
        return FeatureMatrix(frame=frame, feature_names=self.feature_names, warmup=self.warmup)


# ============================================================================
# 개별 피처
# ============================================================================


def spread_proxy(bar: Bar) -> float:
    """
    스프레드 대용치 (H - L) / C

    Raises:
        DomainError: close <= 0
    """
    if bar.close <= 0:
        raise DomainError(f"close는 0보다 커야 합니다 (입력: {bar.close})")
    return (bar.high - bar.low) / bar.close


def _signed_volume(series: BarSeries) -> np.ndarray:
    """sign(r_i)·V_i (i=0은 수익률이 없으므로 NaN), sign(0)=0"""
    closes = series.column("close")
    volume = series.column("volume").astype("float64")
    signed = np.full(len(series), np.nan)
    signed[1:] = np.sign(np.log(closes[1:] / closes[:-1])) * volume[1:]
    return signed


def order_flow_imbalance(series: BarSeries, window: int = 5) -> np.ndarray:
    """
    주문흐름 불균형 OFI_t = Σ_{i=t-window+1..t} sign(r_i)·V_i  (t 포함, 후행 창)

    창이 다 채워지지 않은 워밍업 구간은 NaN입니다.

    Raises:
        ConfigError: window < 1
    """
    if window < 1:
        raise ConfigError(f"OFI window는 1 이상이어야 합니다 (입력: {window})")
    signed = pd.Series(_signed_volume(series))
    return signed.rolling(window=window, min_periods=window).sum().to_numpy()


def session_indicator(timestamps: pd.DatetimeIndex, session: SessionTemplate) -> np.ndarray:
    """장 시작 30분=2, 마감 30분=1, 그 외=0"""
    minute = session.minute_of_session(timestamps)
    to_close = session.minutes - minute
    out = np.full(len(minute), SESSION_MIDDAY, dtype="float64")
    out[to_close <= 30] = SESSION_CLOSE_30MIN
    out[minute < 30] = SESSION_OPEN_30MIN
    return out


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """분모가 0이면 중립값 1.0"""
    out = np.ones_like(num, dtype="float64")
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


# ============================================================================
# 피처 행렬
# ============================================================================


def build_features(
    series: BarSeries,
    lag_k: int = 5,
    window: int = 5,
    session: Optional[SessionTemplate] = None,
) -> FeatureMatrix:
    """
    BarSeries → FeatureMatrix

    행 t는 warmup = max(lag_k, window) 이상, n-2 이하의 분봉에 대해 생성되고
    다음 수익률이 정확히 0인 행은 제외됩니다 (방향 없음).

    Args:
        series: 분봉 시퀀스
        lag_k: 수익률 래그 수 (FEATURE_NAMES는 lag_k=5 기준)
        window: MA / 실현변동성 / OFI 창
        session: 세션 템플릿 (기본: 14:30 UTC, 390분)

    Raises:
        ConfigError: lag_k != 5 또는 window < 2
        InsufficientDataError: 분봉 수 <= warmup + 1
    """
    if lag_k != 5:
        raise ConfigError(f"17차원 피처는 lag_k=5를 전제로 합니다 (입력: {lag_k})")
    if window < 2:
        raise ConfigError(f"window는 2 이상이어야 합니다 (입력: {window})")
    session = session or SessionTemplate()
    warmup = max(lag_k, window)
    n = len(series)
    if n <= warmup + 1:
        raise InsufficientDataError(f"피처 생성에는 분봉 {warmup + 2}개 이상이 필요합니다 (입력: {n})")

    closes = series.column("close")
    highs = pd.Series(series.column("high"))
    lows = pd.Series(series.column("low"))
    volume = series.column("volume").astype("float64")
    ticks = series.column("num_ticks").astype("float64")
    stamps = series.timestamps

    returns = np.full(n, np.nan)
    returns[1:] = np.log(closes[1:] / closes[:-1])
    r = pd.Series(returns)

    spread = (highs.to_numpy() - lows.to_numpy()) / closes
    spread_prev = np.full(n, np.nan)
    spread_prev[1:] = spread[:-1]

    volume_prev = np.full(n, np.nan)
    volume_prev[1:] = volume[:-1]
    volume_ma = pd.Series(volume).rolling(window, min_periods=window).mean().to_numpy()
    ticks_ma = pd.Series(ticks).rolling(window, min_periods=window).mean().to_numpy()

    data = {"timestamp": stamps}
    for k in range(1, lag_k + 1):
        data[f"returns_lag_{k}"] = r.shift(k - 1).to_numpy()
    data["spread_proxy"] = spread
    data["spread_lag_1"] = spread_prev
    data["spread_change"] = spread - spread_prev
    data["volume_ratio"] = _safe_ratio(volume, np.nan_to_num(volume_prev, nan=0.0))
    data["volume_relative"] = _safe_ratio(volume, np.nan_to_num(volume_ma, nan=0.0))
    data["tick_intensity"] = _safe_ratio(ticks, np.nan_to_num(ticks_ma, nan=0.0))
    data["realized_vol_5m"] = r.rolling(window, min_periods=window).std().to_numpy()
    data["price_range_norm"] = (
        highs.rolling(window, min_periods=window).max() - lows.rolling(window, min_periods=window).min()
    ).to_numpy() / closes
    data["ofi"] = order_flow_imbalance(series, window=window)
    data["hour"] = stamps.hour.to_numpy().astype("float64")
    data["minute"] = stamps.minute.to_numpy().astype("float64")
    data["session_indicator"] = session_indicator(stamps, session)

    next_return = np.full(n, np.nan)
    next_return[:-1] = returns[1:]
    data["next_return"] = next_return
    data["label"] = (next_return > 0).astype("int64")

    frame = pd.DataFrame(data).iloc[warmup : n - 1]
    n_before = len(frame)
    frame = frame[frame["next_return"] != 0.0].reset_index(drop=True)
    frame = frame.loc[:, ["timestamp", *FEATURE_NAMES, "label", "next_return"]]

    dropped = n_before - len(frame)
    if dropped:
        logger.info(f"다음 수익률 0인 행 {dropped}개 제외")
    logger.info(f"피처 행렬 생성: rows={len(frame)}, warmup={warmup}")
    return FeatureMatrix(frame=frame, warmup=warmup)


def dump_features(matrix: FeatureMatrix, target: Optional[Union[str, Path, TextIO]] = None) -> str:
    """피처 행렬을 CSV로 저장 (헤더 = feature_names + label)"""
    out = matrix.frame.loc[:, [*matrix.feature_names, "label"]]
    text = out.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text
