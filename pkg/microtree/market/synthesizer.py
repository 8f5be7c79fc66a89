"""
합성 분봉 생성기

비공개 분봉 데이터 대신 사용하는 재현 가능한 생성기입니다.
- 팻테일 수익률 (Student-t)
- 장 시작/마감에 거래량이 몰리는 U자형 거래량
- 주문흐름 불균형(OFI) 신호: 다음 분 수익률 부호가 OFI 부호와 상관
  (ofi_signal_strength로 강도 조절, 0이면 무상관)

OFI는 features 모듈과 같은 규칙(최근 window개 분봉의 sign(r_i)·V_i 합,
t 포함)으로 계산되므로 포레스트가 학습할 수 있는 신호가 심어집니다.
"""

import logging
from datetime import date, datetime, time, timedelta, timezone
from typing import List

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from microtree.errors import ConfigError
from microtree.market.bars import BarSeries

logger = logging.getLogger(__name__)


class SessionTemplate(BaseModel):
    """정규장 시간 템플릿 (UTC 기준)"""

    model_config = ConfigDict(frozen=True)

    open_time: str = Field(default="14:30", description="장 시작 시각 HH:MM (UTC)")
    minutes: int = Field(default=390, ge=1, le=1440, description="정규장 길이 (분)")
    start_date: date = Field(default=date(2025, 1, 2), description="첫 거래일")

    @field_validator("open_time")
    @classmethod
    def _check_open_time(cls, value: str) -> str:
        try:
            datetime.strptime(value, "%H:%M")
        except ValueError as e:
            raise ValueError(f"open_time은 HH:MM 형식이어야 합니다: {value}") from e
        return value

    @property
    def open_offset_minutes(self) -> int:
        parsed = datetime.strptime(self.open_time, "%H:%M")
        return parsed.hour * 60 + parsed.minute

    def minute_of_session(self, timestamps: pd.DatetimeIndex) -> np.ndarray:
        """각 시각의 장 시작 후 경과 분 (장 밖이면 음수 또는 minutes 이상)"""
        minute_of_day = timestamps.hour.to_numpy() * 60 + timestamps.minute.to_numpy()
        return minute_of_day - self.open_offset_minutes

    def session_timestamps(self, n_bars: int) -> List[datetime]:
        """평일 정규장 분 단위 시각을 n_bars개 생성"""
        open_h, open_m = divmod(self.open_offset_minutes, 60)
        stamps: List[datetime] = []
        day = self.start_date
        while len(stamps) < n_bars:
            if day.weekday() < 5:
                start = datetime.combine(day, time(open_h, open_m), tzinfo=timezone.utc)
                for m in range(self.minutes):
                    stamps.append(start + timedelta(minutes=m))
                    if len(stamps) == n_bars:
                        break
            day += timedelta(days=1)
        return stamps


class GeneratorConfig(BaseModel):
    """합성 분봉 생성 설정"""

    model_config = ConfigDict(frozen=True)

    n_bars: int = Field(default=50_000, description="생성할 분봉 수 (>= 100)")
    base_price: float = Field(default=600.0, description="시작 가격")
    minute_vol: float = Field(default=0.0008, description="분당 로그수익률 표준편차")
    drift: float = Field(default=0.0, description="분당 로그수익률 평균")
    ofi_signal_strength: float = Field(default=0.8, ge=0.0, le=1.0, description="OFI → 다음 수익률 부호 신호 강도")
    ofi_window: int = Field(default=5, ge=1, description="OFI 누적 창 (분)")
    u_shape_amplitude: float = Field(default=2.0, ge=0.0, description="U자형 거래량 진폭")
    base_volume: float = Field(default=100_000.0, description="장중 평균 거래량 기준")
    volume_dispersion: float = Field(default=0.5, ge=0.0, description="거래량 로그정규 분산 계수")
    ticks_per_share: float = Field(default=0.0025, ge=0.0, description="거래량 1주당 평균 틱 수")
    tail_df: float = Field(default=4.0, description="Student-t 자유도 (팻테일)")
    range_scale: float = Field(default=0.5, ge=0.0, description="고저 범위 스케일 (minute_vol 배수)")
    session: SessionTemplate = Field(default_factory=SessionTemplate)
    symbol: str = Field(default="SYNTH", description="종목 식별자")

    def validate_for_generation(self) -> None:
        """생성 전 사전 조건 검사 (ConfigError)"""
        if self.n_bars < 100:
            raise ConfigError(f"n_bars는 100 이상이어야 합니다 (입력: {self.n_bars})")
        if self.minute_vol <= 0:
            raise ConfigError(f"minute_vol은 0보다 커야 합니다 (입력: {self.minute_vol})")
        if self.base_price <= 0:
            raise ConfigError(f"base_price는 0보다 커야 합니다 (입력: {self.base_price})")
        if self.base_volume <= 0:
            raise ConfigError(f"base_volume은 0보다 커야 합니다 (입력: {self.base_volume})")
        if self.tail_df <= 2:
            raise ConfigError(f"tail_df는 2보다 커야 분산이 유한합니다 (입력: {self.tail_df})")


def _u_shape(minute_of_session: np.ndarray, session_minutes: int, amplitude: float) -> np.ndarray:
    """장 시작/마감에 높은 U자형 가중치 (평균 1로 정규화 전)"""
    mid = (session_minutes - 1) / 2.0
    x = (minute_of_session - mid) / max(mid, 1.0)
    return 1.0 + amplitude * x ** 2


def synthesize_bars(config: GeneratorConfig, seed: int) -> BarSeries:
    """
    합성 분봉 생성

    (config, seed)가 같으면 비트 단위로 같은 결과를 반환합니다.

    Args:
        config: 생성 설정
        seed: 난수 시드

    Returns:
        BarSeries: load_bars 검증을 항상 통과하는 시퀀스

    Raises:
        ConfigError: n_bars < 100, 비양수 변동성/가격
    """
    config.validate_for_generation()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = config.n_bars
    window = config.ofi_window
    s = config.ofi_signal_strength

    stamps = config.session.session_timestamps(n)
    minute_of_session = np.array([(t.hour * 60 + t.minute) - config.session.open_offset_minutes for t in stamps])

    # 거래량: U자형 * 로그정규 잡음, 평균이 base_volume 근처가 되도록 정규화
    shape = _u_shape(minute_of_session, config.session.minutes, config.u_shape_amplitude)
    shape = shape / shape.mean()
    sigma_v = config.volume_dispersion
    noise = rng.lognormal(mean=-0.5 * sigma_v ** 2, sigma=sigma_v, size=n)
    volume = np.floor(config.base_volume * shape * noise).astype(np.int64)
    num_ticks = rng.poisson(volume * config.ticks_per_share).astype(np.int64)

    # 수익률 크기: 분산 1로 정규화한 Student-t의 절대값
    df = config.tail_df
    t_draws = rng.standard_t(df, size=n) * np.sqrt((df - 2.0) / df)
    magnitudes = np.abs(t_draws) * config.minute_vol
    coin = rng.random(n)

    # 부호는 순차 생성 (직전 window개 분봉의 OFI에 의존)
    returns = np.zeros(n)
    signed_volume = np.zeros(n)
    for t in range(1, n):
        lo = max(1, t - window)
        ofi_prev = signed_volume[lo:t].sum() if t - 1 >= window else 0.0
        p_up = 0.5 * (1.0 + s * np.sign(ofi_prev))
        sign = 1.0 if coin[t] < p_up else -1.0
        returns[t] = config.drift + sign * magnitudes[t]
        signed_volume[t] = np.sign(returns[t]) * volume[t]

    closes = config.base_price * np.exp(np.cumsum(returns))
    opens = np.empty(n)
    opens[0] = config.base_price
    opens[1:] = closes[:-1]

    spread = np.abs(rng.standard_normal((2, n))) * config.range_scale * config.minute_vol
    highs = np.maximum(opens, closes) * np.exp(spread[0])
    lows = np.minimum(opens, closes) * np.exp(-spread[1])

    frame = pd.DataFrame(
        {
            "timestamp": pd.DatetimeIndex(stamps),
            "open": opens,
            "high": highs,
            "low": lows,
            "close": closes,
            "volume": volume,
            "num_ticks": num_ticks,
        }
    )
    series = BarSeries.from_frame(frame, symbol=config.symbol)
    logger.info(f"합성 분봉 생성: n_bars={n}, seed={seed}, ofi_signal_strength={s}")
    return series
