"""
Pricing Module

유럽형 옵션 가격결정:
- options: 옵션 명세 / 결과 / 페이오프
- backward: 트리 역진 귀납
- benchmarks: Black-Scholes, CRR, 내재변동성
- monte_carlo: 상태 의존 동학 Monte Carlo
- comparison: 벤치마크 비교 리포트
"""

from .backward import backward_values, price_tree
from .benchmarks import black_scholes, implied_volatility, price_crr
from .comparison import ComparisonReport, PriceComparison, compare_report
from .monte_carlo import price_monte_carlo
from .options import DAYS_PER_YEAR, OptionSpec, PricingResult, check_maturity, payoff

__all__ = [
    # Options
    "DAYS_PER_YEAR",
    "OptionSpec",
    "PricingResult",
    "payoff",
    "check_maturity",
    # Methods
    "price_tree",
    "backward_values",
    "black_scholes",
    "price_crr",
    "implied_volatility",
    "price_monte_carlo",
    # Comparison
    "PriceComparison",
    "ComparisonReport",
    "compare_report",
]
