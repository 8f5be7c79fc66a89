"""
벤치마크 가격: Black-Scholes 닫힌 해, CRR 재결합 이항트리, 내재변동성 역산

정규분포 CDF는 scipy.stats.norm (erfc 기반, 배정밀도 오차 수준)을 사용합니다.
"""

import logging
import math
import time

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from microtree.calibration.factors import mmm_probability
from microtree.errors import ConfigError, DomainError
from microtree.pricing.options import OptionSpec, PricingResult, payoff

logger = logging.getLogger(__name__)

IV_LOWER = 1e-6
IV_UPPER = 10.0


def black_scholes(S0: float, spec: OptionSpec, sigma: float) -> PricingResult:
    """
    Black-Scholes 유럽형 옵션 가격

    Raises:
        DomainError: S0 <= 0 또는 sigma <= 0
    """
    if not S0 > 0.0:
        raise DomainError(f"S0는 양수여야 합니다: {S0}")
    if not sigma > 0.0:
        raise DomainError(f"변동성은 양수여야 합니다: {sigma}")
    T, K, r = spec.maturity, spec.strike, spec.rate
    disc_k = K * math.exp(-r * T)
    if K == 0.0:
        price = S0 if spec.kind == "call" else 0.0
    else:
        vol = sigma * math.sqrt(T)
        d1 = (math.log(S0 / K) + (r + 0.5 * sigma**2) * T) / vol
        d2 = d1 - vol
        if spec.kind == "call":
            price = S0 * norm.cdf(d1) - disc_k * norm.cdf(d2)
        else:
            price = disc_k * norm.cdf(-d2) - S0 * norm.cdf(-d1)
    return PricingResult(price=max(float(price), 0.0), method="black_scholes", diagnostics={"sigma": sigma})


def price_crr(S0: float, spec: OptionSpec, sigma: float, N: int) -> PricingResult:
    """
    CRR 재결합 이항트리: u = e^{σ√Δt}, d = 1/u, p = (e^{rΔt} - d)/(u - d)

    Raises:
        ConfigError: N < 1
        DomainError: sigma <= 0
        ArbitrageViolationError: p ∉ (0, 1)
    """
    if N < 1:
        raise ConfigError(f"스텝 수는 1 이상이어야 합니다: N={N}")
    if not sigma > 0.0:
        raise DomainError(f"변동성은 양수여야 합니다: {sigma}")
    started = time.perf_counter()
    dt = spec.maturity / N
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    p = mmm_probability(u, d, spec.rate, dt)
    disc = math.exp(-spec.rate * dt)

    ups = np.arange(N + 1)
    terminal = S0 * u**ups * d ** (N - ups)
    values = np.asarray(payoff(spec, terminal), dtype="float64")
    for _ in range(N):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
    elapsed = time.perf_counter() - started
    return PricingResult(
        price=max(float(values[0]), 0.0),
        method="crr",
        n_steps=N,
        diagnostics={"node_count": float((N + 1) * (N + 2) // 2), "pricing_seconds": elapsed, "sigma": sigma},
    )


def implied_volatility(price: float, S0: float, spec: OptionSpec) -> float:
    """
    Black-Scholes 가격을 맞추는 변동성 (Brent 법)

    Raises:
        DomainError: 가격이 [σ 하한, σ 상한] 가격 범위 밖
    """
    low = black_scholes(S0, spec, IV_LOWER).price
    high = black_scholes(S0, spec, IV_UPPER).price
    if not low <= price <= high:
        raise DomainError(f"내재변동성을 구할 수 없는 가격입니다: {price} (범위 {low:.6g} ~ {high:.6g})")
    if price == low:
        return IV_LOWER
    return float(brentq(lambda s: black_scholes(S0, spec, s).price - price, IV_LOWER, IV_UPPER, xtol=1e-12))
