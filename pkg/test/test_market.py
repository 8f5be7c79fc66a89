"""
분봉 로딩 / 요약 통계 / 합성 데이터 테스트
"""

import io
import math
import warnings

import numpy as np
import pytest

from microtree.errors import ConfigError, EmptyInputError, InsufficientDataError, ParseError, ValidationError
from microtree.features import build_features
from microtree.market import (
    GeneratorConfig,
    dump_bars,
    historical_volatility,
    intraday_volume_profile,
    load_bars,
    log_returns,
    summarize,
    synthesize_bars,
)
from microtree.market.synthesizer import SessionTemplate
from microtree.types import is_undefined

from conftest import series_from_closes

HEADER = "timestamp,open,high,low,close,volume,num_ticks\n"

VALID_CSV = HEADER + (
    "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
    "2025-01-02T14:31:00,600.2,600.9,600.1,600.7,98000,250\n"
    "2025-01-02T14:32:00,600.7,600.8,599.9,600.0,0,0\n"
)


# ============================================================================
# load_bars
# ============================================================================


def test_load_bars_valid_rows():
    """정상 3행 → 길이 3, 시각 엄격 증가"""
    series = load_bars(io.StringIO(VALID_CSV), symbol="SPY")
    assert len(series) == 3
    assert series.symbol == "SPY"
    stamps = series.timestamps
    assert all(stamps[i] < stamps[i + 1] for i in range(len(stamps) - 1))
    # 거래량 0인 분봉도 유지
    assert series.column("volume")[-1] == 0


def test_load_bars_high_below_low_names_row():
    """high < low → 해당 줄 번호를 담은 ValidationError"""
    text = HEADER + (
        "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
        "2025-01-02T14:31:00,600.2,599.0,600.1,600.7,98000,250\n"
    )
    with pytest.raises(ValidationError) as exc:
        load_bars(io.StringIO(text), symbol="SPY")
    assert exc.value.row == 3
    assert exc.value.exit_code == 2


def test_load_bars_duplicate_timestamp():
    text = HEADER + (
        "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
        "2025-01-02T14:30:00,600.2,600.9,600.1,600.7,98000,250\n"
    )
    with pytest.raises(ValidationError):
        load_bars(io.StringIO(text), symbol="SPY")


def test_load_bars_empty_input():
    with pytest.raises(EmptyInputError):
        load_bars(io.StringIO(""), symbol="SPY")
    with pytest.raises(EmptyInputError):
        load_bars(io.StringIO(HEADER), symbol="SPY")


def test_load_bars_line_numbers_count_blank_lines():
    """빈 줄은 건너뛰되 에러의 줄 번호는 파일 기준"""
    text = HEADER + (
        "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
        "\n"
        "2025-01-02T14:31:00,abc,600.9,600.1,600.7,98000,250\n"
    )
    with pytest.raises(ParseError) as exc:
        load_bars(io.StringIO(text), symbol="SPY")
    assert exc.value.line == 4

    text = HEADER + (
        "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
        "\n"
        "2025-01-02T14:31:00,600.2,599.0,600.1,600.7,98000,250\n"
    )
    with pytest.raises(ValidationError) as exc:
        load_bars(io.StringIO(text), symbol="SPY")
    assert exc.value.row == 4

    spaced = VALID_CSV.replace("310\n", "310\n\n")
    assert len(load_bars(io.StringIO(spaced), symbol="SPY")) == 3


def test_load_bars_emits_no_timezone_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error", UserWarning)
        series = load_bars(io.StringIO(VALID_CSV), symbol="SPY")
        assert log_returns(series, include_overnight=False).size == 2


def test_load_bars_unparsable_value_reports_line():
    text = HEADER + (
        "2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310\n"
        "2025-01-02T14:31:00,abc,600.9,600.1,600.7,98000,250\n"
    )
    with pytest.raises(ParseError) as exc:
        load_bars(io.StringIO(text), symbol="SPY")
    assert exc.value.line == 3


def test_load_bars_wrong_header():
    with pytest.raises(ParseError):
        load_bars(io.StringIO("time,o,h,l,c,v,n\n"), symbol="SPY")


def test_dump_then_load_is_identical(tmp_path, small_series):
    """저장 후 다시 로드하면 같은 시퀀스"""
    path = tmp_path / "nested" / "bars.csv"
    dump_bars(small_series, path)
    assert load_bars(path, symbol=small_series.symbol) == small_series


# ============================================================================
# 요약 통계
# ============================================================================


def test_single_log_return():
    """종가 100 → 100·e^0.01 → 로그수익률 0.01"""
    series = series_from_closes([100.0, 100.0 * math.exp(0.01)])
    returns = log_returns(series)
    assert returns.shape == (1,)
    assert returns[0] == pytest.approx(0.01, abs=1e-15)


def test_constant_closes_report_undefined_moments():
    series = series_from_closes([100.0] * 20)
    stats = summarize(series)
    assert stats.log_returns.mean == 0.0
    assert stats.log_returns.std == 0.0
    assert is_undefined(stats.skewness)
    assert is_undefined(stats.excess_kurtosis)


def test_summarize_requires_two_bars():
    with pytest.raises(InsufficientDataError):
        summarize(series_from_closes([100.0]))


def test_historical_volatility_annualizes(small_series):
    per_minute = float(np.std(log_returns(small_series), ddof=1))
    assert historical_volatility(small_series, minutes_per_year=98_280) == pytest.approx(per_minute * math.sqrt(98_280))


def test_intraday_volume_profile_is_u_shaped(small_series):
    """장 시작 / 마감 평균 거래량이 정오보다 큼"""
    profile = intraday_volume_profile(small_series, SessionTemplate())
    volume = profile.set_index("minute_of_session")["mean_volume"]
    assert volume.loc[0:9].mean() > volume.loc[180:200].mean()
    assert volume.loc[380:389].mean() > volume.loc[180:200].mean()


# ============================================================================
# 합성 데이터
# ============================================================================


def test_synthesize_is_deterministic():
    config = GeneratorConfig(n_bars=500)
    assert synthesize_bars(config, seed=11) == synthesize_bars(config, seed=11)
    assert synthesize_bars(config, seed=11) != synthesize_bars(config, seed=12)


def test_synthesize_rejects_short_series():
    with pytest.raises(ConfigError):
        synthesize_bars(GeneratorConfig(n_bars=50), seed=0)


def test_synthesize_rejects_non_positive_vol():
    with pytest.raises(ConfigError):
        synthesize_bars(GeneratorConfig(n_bars=500, minute_vol=0.0), seed=0)


@pytest.mark.slow
def test_synthetic_bars_match_configured_volatility():
    config = GeneratorConfig(n_bars=20_000)
    returns = log_returns(synthesize_bars(config, seed=1), include_overnight=False)
    assert float(np.std(returns)) == pytest.approx(config.minute_vol, rel=0.1)


def test_planted_ofi_signal_predicts_direction(small_matrix):
    """OFI 부호 규칙의 방향 정확도 > 0.7 (신호 강도 0.8)"""
    ofi = small_matrix.frame["ofi"].to_numpy()
    labels = small_matrix.y
    mask = ofi != 0
    accuracy = float(np.mean((ofi[mask] > 0).astype(int) == labels[mask]))
    assert accuracy > 0.7


@pytest.mark.slow
def test_zero_signal_strength_has_no_ofi_correlation():
    series = synthesize_bars(GeneratorConfig(n_bars=20_000, ofi_signal_strength=0.0), seed=5)
    matrix = build_features(series)
    corr = np.corrcoef(matrix.frame["ofi"].to_numpy(), matrix.next_returns)[0, 1]
    assert abs(corr) < 3.0 / math.sqrt(len(matrix))
