"""
공용 pytest fixture

작은 합성 데이터 / 포레스트 / 상태 테이블을 모듈 간에 공유합니다.
"""

import math

import numpy as np
import pandas as pd
import pytest

from microtree.calibration import StateTable, calibrate_state
from microtree.features import FEATURE_NAMES, FeatureMatrix, build_features
from microtree.forest import ForestConfig, train
from microtree.market import BarSeries, GeneratorConfig, synthesize_bars

MINUTES_PER_YEAR = 98_280.0
DT_MINUTE = 1.0 / MINUTES_PER_YEAR
MATURITY = 30.0 / 365.0
STEPS = 10
DT_TREE = MATURITY / STEPS
RATE = 0.05


def bars_frame(rows):
    """(timestamp, open, high, low, close, volume, num_ticks) 튜플 → DataFrame"""
    return pd.DataFrame(rows, columns=["timestamp", "open", "high", "low", "close", "volume", "num_ticks"])


def series_from_closes(closes, volumes=None, start="2025-01-02T14:30:00"):
    """종가 / 거래량만 지정한 분봉 시퀀스 (open = 직전 종가)"""
    closes = np.asarray(closes, dtype="float64")
    volumes = np.full(closes.size, 100) if volumes is None else np.asarray(volumes)
    opens = np.r_[closes[0], closes[:-1]]
    stamps = pd.date_range(start, periods=closes.size, freq="min", tz="UTC")
    frame = pd.DataFrame(
        {
            "timestamp": stamps,
            "open": opens,
            "high": np.maximum(opens, closes) + 0.01,
            "low": np.minimum(opens, closes) - 0.01,
            "close": closes,
            "volume": volumes,
            "num_ticks": np.maximum(volumes // 10, 1),
        }
    )
    return BarSeries.from_frame(frame, symbol="TEST")


def toy_matrix(n_rows: int = 1000, seed: int = 0, signal_feature: int = 0) -> FeatureMatrix:
    """라벨 = sign(피처 signal_feature) 인 선형 분리 가능 피처 행렬"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, len(FEATURE_NAMES)))
    labels = (X[:, signal_feature] > 0).astype("int64")
    frame = pd.DataFrame(X, columns=list(FEATURE_NAMES))
    frame.insert(0, "timestamp", pd.date_range("2025-01-02T14:30:00", periods=n_rows, freq="min", tz="UTC"))
    frame["label"] = labels
    frame["next_return"] = np.where(labels == 1, 0.001, -0.001)
    return FeatureMatrix(frame=frame)


def banded_table(n_bins: int = 20, sigma: float = 0.02, r: float = RATE, dt: float = DT_TREE) -> StateTable:
    """구간 중심을 p_rf로 하는 n_bins개 상태 테이블 (μ = 0, 스텝 변동성 sigma)"""
    states = []
    for s in range(n_bins):
        p = (s + 0.5) / n_bins
        state = calibrate_state(p, 0.0, sigma**2, r, dt, state_id=s)
        states.append(state.model_copy(update={"bin_lower": s / n_bins, "bin_upper": (s + 1) / n_bins}))
    return StateTable(states=tuple(states), n_bins=n_bins, dt_minute=DT_MINUTE, dt_tree=dt, r=r)


def crr_table(sigma: float, r: float = RATE, dt: float = DT_TREE) -> StateTable:
    """u = e^{σ√Δt}, d = 1/u 단일 상태 테이블"""
    u = math.exp(sigma * math.sqrt(dt))
    return StateTable.single_state(u, 1.0 / u, r, dt)


@pytest.fixture(scope="session")
def small_series() -> BarSeries:
    return synthesize_bars(GeneratorConfig(n_bars=2000), seed=7)


@pytest.fixture(scope="session")
def small_matrix(small_series) -> FeatureMatrix:
    return build_features(small_series)


@pytest.fixture(scope="session")
def small_forest(small_matrix):
    config = ForestConfig(n_trees=10, max_depth=4, min_samples_leaf=10, features_per_split=5, seed=3)
    return train(small_matrix, config)


@pytest.fixture(scope="session")
def table() -> StateTable:
    return banded_table()
