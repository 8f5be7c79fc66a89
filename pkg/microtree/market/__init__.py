"""
Market Data Module

분봉 데이터 레이어:
- bars: CSV 로딩 / 검증 / 저장
- synthesizer: 합성 분봉 생성기
- summary: 요약 통계, 역사적 변동성, 장중 거래량 프로파일
"""

from .bars import BAR_COLUMNS, Bar, BarSeries, dump_bars, load_bars
from .synthesizer import GeneratorConfig, SessionTemplate, synthesize_bars
from .summary import (
    SummaryStats,
    VariableStats,
    historical_volatility,
    intraday_volume_profile,
    log_returns,
    summarize,
)

__all__ = [
    # Bars
    "BAR_COLUMNS",
    "Bar",
    "BarSeries",
    "load_bars",
    "dump_bars",
    # Synthesizer
    "GeneratorConfig",
    "SessionTemplate",
    "synthesize_bars",
    # Summary
    "SummaryStats",
    "VariableStats",
    "summarize",
    "log_returns",
    "historical_volatility",
    "intraday_volume_profile",
]
