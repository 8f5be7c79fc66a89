"""
상태 분류 / 이동 팩터 / MMM 확률 캘리브레이션 테스트
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microtree.calibration import (
    MarketState,
    bin_states,
    calibrate_all,
    calibrate_state,
    conditional_moments,
    kl_divergence_bernoulli,
    load_state_table,
    mmm_probability,
    save_state_table,
    scale_factors,
    solve_factors,
    state_of,
)
from microtree.errors import (
    ArbitrageViolationError,
    ConfigError,
    DegenerateProbabilityError,
    DegenerateVolatilityError,
    DomainError,
    MissingArtifactError,
    ShapeError,
)
from microtree.types import is_undefined

from conftest import DT_MINUTE, DT_TREE, RATE


# ============================================================================
# 상태 분류 / 조건부 모멘트
# ============================================================================


@pytest.mark.parametrize("p, expected", [(0.025, 0), (0.0, 0), (0.31, 6), (0.35, 7), (1.0, 19), (1.2, 19), (-0.1, 0)])
def test_state_of(p, expected):
    assert state_of(p, 20) == expected


def test_bin_states_uniform_counts():
    probs = np.random.default_rng(0).random(20_000)
    counts = bin_states(probs, 20).counts
    assert counts.sum() == 20_000
    assert np.all(np.abs(counts - 1000) <= 5 * math.sqrt(1000))


def test_bin_states_rejects_single_bin():
    with pytest.raises(ConfigError):
        bin_states([0.2, 0.4], n_bins=1)


def test_two_point_moments():
    """수익률 (+0.001, -0.001) → mu 0, sigma2 2e-6 (n-1 분모)"""
    (m,) = conditional_moments([0.001, -0.001], [0, 0], n_bins=1)
    assert m.mu == pytest.approx(0.0, abs=1e-18)
    assert m.sigma2 == pytest.approx(2e-6, rel=1e-12)
    assert m.n == 2
    assert not m.sparse


def test_identical_returns_are_degenerate():
    (m,) = conditional_moments([0.0005] * 5, [0] * 5, n_bins=1)
    assert m.sigma2 == 0.0
    assert m.degenerate


def test_single_sample_state_is_sparse():
    moments = conditional_moments([0.001, 0.002, -0.001], [0, 0, 1], n_bins=3)
    assert moments[1].sparse
    assert moments[2].sparse and moments[2].n == 0


def test_moments_shape_mismatch():
    with pytest.raises(ShapeError):
        conditional_moments([0.1, 0.2], [0])


def test_recovers_state_dependent_drift():
    rng = np.random.default_rng(3)
    probs = rng.random(20_000)
    planted = (probs - 0.5) * 0.0004
    returns = planted + rng.normal(0.0, 0.0008, size=probs.size)
    assignment = bin_states(probs, 20)
    for m in conditional_moments(returns, assignment):
        expected = planted[assignment.state_ids == m.state_id].mean()
        assert abs(m.mu - expected) < 3 * 0.0008 / math.sqrt(m.n)


# ============================================================================
# 닫힌 해 / 스케일링
# ============================================================================


@pytest.mark.parametrize(
    "p, mu, sigma, ln_u, ln_d",
    [
        (0.5, 0.0, 0.01, 0.01, -0.01),
        (0.8, 0.0, 0.01, 0.005, -0.02),
        (0.5, 0.001, 0.01, 0.011, -0.009),
    ],
)
def test_solve_factors_examples(p, mu, sigma, ln_u, ln_d):
    u, d = solve_factors(p, mu, sigma**2)
    assert math.log(u) == pytest.approx(ln_u, abs=1e-12)
    assert math.log(d) == pytest.approx(ln_d, abs=1e-12)


def test_solve_factors_symmetric_values():
    u, d = solve_factors(0.5, 0.0, 1e-4)
    assert u == pytest.approx(1.010050, abs=1e-6)
    assert d == pytest.approx(0.990050, abs=1e-6)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_solve_factors_degenerate_probability(p):
    with pytest.raises(DegenerateProbabilityError):
        solve_factors(p, 0.0, 1e-4)


def test_solve_factors_degenerate_volatility():
    with pytest.raises(DegenerateVolatilityError):
        solve_factors(0.5, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    p=st.floats(min_value=0.01, max_value=0.99),
    mu=st.floats(min_value=-0.01, max_value=0.01),
    sigma=st.floats(min_value=1e-4, max_value=0.05),
)
def test_solve_factors_matches_moments(p, mu, sigma):
    """p·ln u + (1-p)·ln d = μ, p(1-p)(ln u - ln d)² = σ²"""
    u, d = solve_factors(p, mu, sigma**2)
    ln_u, ln_d = math.log(u), math.log(d)
    assert p * ln_u + (1 - p) * ln_d == pytest.approx(mu, abs=1e-12)
    assert p * (1 - p) * (ln_u - ln_d) ** 2 == pytest.approx(sigma**2, rel=1e-9)


def minute_state(p: float = 0.6, mu: float = 0.00002, sigma2: float = 0.0008**2, dt: float = 0.00001018) -> MarketState:
    u, d = solve_factors(p, mu, sigma2)
    return MarketState(p_rf=p, mu=mu, sigma2=sigma2, u=u, d=d, dt=dt)


def test_scale_factors_ratio():
    """3일 스텝 / 1분 → 비율 약 807, σ 배수 약 √807.8"""
    state = minute_state()
    scaled = scale_factors(state, 0.00001018, 0.008219)
    ratio = 0.008219 / 0.00001018
    assert ratio == pytest.approx(807.4, abs=0.1)
    assert scaled.sigma2 / state.sigma2 == pytest.approx(ratio)
    assert scaled.mu / state.mu == pytest.approx(ratio)
    assert math.sqrt(scaled.sigma2 / state.sigma2) == pytest.approx(math.sqrt(807.8), rel=0.005)
    assert scaled.dt == pytest.approx(0.008219)
    assert scaled.scaling_applied


def test_pure_volatility_scaling_spreads_log_factors():
    """μ = 0 이면 ln u - ln d 가 √ρ 배"""
    state = minute_state(mu=0.0)
    ratio = 0.008219 / 0.00001018
    scaled = scale_factors(state, 0.00001018, 0.008219)
    spread = math.log(state.u) - math.log(state.d)
    scaled_spread = math.log(scaled.u) - math.log(scaled.d)
    assert scaled_spread == pytest.approx(spread * math.sqrt(ratio), abs=1e-10)


def test_scale_factors_identity():
    state = minute_state()
    scaled = scale_factors(state, state.dt, state.dt)
    assert scaled.u == pytest.approx(state.u, abs=1e-12)
    assert scaled.d == pytest.approx(state.d, abs=1e-12)
    assert not scaled.scaling_applied


def test_scale_factors_round_trip():
    state = minute_state()
    back = scale_factors(scale_factors(state, 0.00001018, 0.008219), 0.008219, 0.00001018)
    assert back.u == pytest.approx(state.u, abs=1e-10)
    assert back.d == pytest.approx(state.d, abs=1e-10)


def test_scale_factors_rejects_non_positive_dt():
    with pytest.raises(DomainError):
        scale_factors(minute_state(), 0.0, 0.01)


# ============================================================================
# MMM 확률 / KL
# ============================================================================


def test_mmm_probability_examples():
    assert mmm_probability(1.25, 0.8, 0.0, 1.0) == pytest.approx(0.2 / 0.45, abs=1e-12)
    assert mmm_probability(1.25, 0.8, 0.0, 1.0) == pytest.approx(0.444444, abs=1e-6)
    assert mmm_probability(1.01, 1 / 1.01, 0.0, 0.5) == pytest.approx(0.497512, abs=1e-6)


def test_mmm_probability_boundary():
    assert mmm_probability(1.1, 1.0, 0.0, 0.3) == 0.0


def test_mmm_probability_arbitrage_violation():
    with pytest.raises(ArbitrageViolationError) as exc:
        mmm_probability(1.1, 1.05, 0.0, 1.0, state_id=4)
    assert exc.value.state_id == 4
    assert exc.value.exit_code == 4


def test_mmm_probability_requires_ordered_factors():
    with pytest.raises(DomainError):
        mmm_probability(0.9, 1.1, 0.0, 1.0)


@pytest.mark.parametrize(
    "p, q, expected",
    [
        (0.37, 0.37, 0.0),
        (0.5, 0.25, 0.5 * math.log(2) + 0.5 * math.log(2 / 3)),
        (0.0, 0.5, math.log(2)),
    ],
)
def test_kl_examples(p, q, expected):
    assert kl_divergence_bernoulli(p, q) == pytest.approx(expected, abs=1e-12)


def test_kl_values():
    assert kl_divergence_bernoulli(0.5, 0.25) == pytest.approx(0.143841, abs=1e-6)
    assert kl_divergence_bernoulli(0.0, 0.5) == pytest.approx(0.693147, abs=1e-6)


def test_kl_mismatched_certainty_is_infinite():
    assert kl_divergence_bernoulli(0.5, 0.0) == math.inf
    assert kl_divergence_bernoulli(1.0, 1.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    p=st.floats(min_value=0.0, max_value=1.0),
    q=st.floats(min_value=1e-9, max_value=1.0 - 1e-9),
)
def test_kl_is_non_negative(p, q):
    assert kl_divergence_bernoulli(p, q) >= 0.0
    assert kl_divergence_bernoulli(q, q) == pytest.approx(0.0, abs=1e-12)


def test_kl_rejects_out_of_range():
    with pytest.raises(DomainError):
        kl_divergence_bernoulli(1.2, 0.5)


# ============================================================================
# 상태별 캘리브레이션
# ============================================================================


def test_consistent_state_is_unchanged():
    """모멘트 매칭 팩터가 이미 p_MMM = p_RF 이면 목적함수 0, 팩터 그대로"""
    u, d = 1.02, 0.99
    q = (math.exp(RATE * DT_TREE) - d) / (u - d)
    ln_u, ln_d = math.log(u), math.log(d)
    mu = q * ln_u + (1 - q) * ln_d
    sigma2 = q * (1 - q) * (ln_u - ln_d) ** 2
    state = calibrate_state(q, mu, sigma2, RATE, DT_TREE)
    assert state.objective == pytest.approx(0.0, abs=1e-14)
    assert not state.optimized
    assert state.u == pytest.approx(u, abs=1e-12)
    assert state.d == pytest.approx(d, abs=1e-12)
    assert state.kl == pytest.approx(0.0, abs=1e-12)


def test_variance_only_objective_matches_volatility():
    sigma2 = 0.02**2
    state = calibrate_state(0.6, 0.001, sigma2, RATE, DT_TREE, w1=0.0, w2=1.0)
    q = state.p_mmm
    var_model = q * (1 - q) * (math.log(state.u) - math.log(state.d)) ** 2
    assert abs(var_model - sigma2) / sigma2 < 1e-6


def grid_min_kl(p: float, mu: float, r: float = RATE, dt: float = DT_TREE) -> float:
    """같은 (u, d) 족 (ln d = (μ - p·ln u)/(1 - p)) 위의 격자 최소 KL"""
    growth = math.exp(r * dt)
    x = np.linspace(1e-6, 3.0, 60_001)
    u = np.exp(x)
    d = np.exp((mu - p * x) / (1 - p))
    ok = (d < growth) & (growth < u)
    q = (growth - d[ok]) / (u[ok] - d[ok])
    q = q[(q > 0.0) & (q < 1.0)]
    kl = q * np.log(q / p) + (1 - q) * np.log((1 - q) / (1 - p))
    return float(kl.min())


def test_kl_only_objective_matches_grid_search():
    """w2 = 0, 임의의 100개 상태 → 격자 최소 KL 이하"""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        p = float(rng.uniform(0.05, 0.95))
        mu = float(rng.uniform(-0.002, 0.002))
        sigma = float(rng.uniform(0.005, 0.03))
        state = calibrate_state(p, mu, sigma**2, RATE, DT_TREE, w1=1.0, w2=0.0)
        assert state.kl <= grid_min_kl(p, mu) + 1e-9, (p, mu, sigma)
        # 물리 측도 평균 유지
        assert p * math.log(state.u) + (1 - p) * math.log(state.d) == pytest.approx(mu, abs=1e-12)


def test_low_probability_state_searches_beyond_initial_interval():
    """p ≈ 0.09 이면 KL 최소점이 ln u0 + 6σ 바깥에 있음"""
    p, mu, sigma = 0.0914, -0.00123, 0.01287
    state = calibrate_state(p, mu, sigma**2, RATE, DT_TREE, w1=1.0, w2=0.0)
    u0, _ = solve_factors(p, mu, sigma**2)
    assert math.log(state.u) > math.log(u0) + 6 * sigma
    assert state.kl < 1e-10
    assert state.kl <= grid_min_kl(p, mu) + 1e-12


def test_calibrated_state_is_arbitrage_free(table):
    for state in table.states:
        assert 0.0 < state.d < table.growth < state.u
        assert 0.0 < state.p_mmm < 1.0
        assert state.p_mmm * state.u + (1 - state.p_mmm) * state.d == pytest.approx(table.growth, abs=1e-12)


def test_calibrate_state_rejects_zero_weights():
    with pytest.raises(ConfigError):
        calibrate_state(0.5, 0.0, 1e-4, RATE, DT_TREE, w1=0.0, w2=0.0)


# ============================================================================
# 전체 테이블
# ============================================================================


def synthetic_probs_and_returns(n: int = 20_000, seed: int = 0):
    rng = np.random.default_rng(seed)
    probs = rng.random(n)
    returns = (probs - 0.5) * 0.00004 + rng.normal(0.0, 0.0008, size=n)
    return probs, returns


def test_calibrate_all_states_satisfy_no_arbitrage():
    probs, returns = synthetic_probs_and_returns()
    table = calibrate_all(probs, returns, RATE, DT_MINUTE, DT_TREE, n_bins=20)
    assert len(table.states) == 20
    for state in table.states:
        assert 0.0 < state.d < table.growth < state.u
    assert table.scaling_ratio == pytest.approx(DT_TREE / DT_MINUTE)
    summary = table.summary()
    assert summary.n_states == 20
    assert summary.n_sparse == 0


def test_probability_gap_and_kl_move_together():
    """|p_rf - p_mmm| 와 kl 의 스피어만 상관 > 0"""
    probs, returns = synthetic_probs_and_returns()
    summary = calibrate_all(probs, returns, RATE, DT_MINUTE, DT_TREE, n_bins=20).summary()
    assert not is_undefined(summary.spearman_diff_kl)
    assert summary.spearman_diff_kl > 0.0


def test_min_samples_infinite_pools_every_state():
    probs, returns = synthetic_probs_and_returns(2000, seed=1)
    table = calibrate_all(probs, returns, RATE, DT_MINUTE, DT_TREE, n_bins=20, min_samples=math.inf)
    assert all(s.sparse for s in table.states)
    assert len({(s.u, s.d, s.p_mmm) for s in table.states}) == 1


def test_state_table_frame_columns(table):
    frame = table.to_frame()
    assert len(frame) == 20
    for column in ("state_id", "p_rf", "p_mmm", "abs_prob_diff", "u", "d", "kl", "implied_vol_annual"):
        assert column in frame.columns


def test_save_and_load_state_table(tmp_path, table):
    path = tmp_path / "state_table.json"
    save_state_table(table, path)
    assert load_state_table(path) == table


def test_load_missing_state_table(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_state_table(tmp_path / "missing.json")
