"""
가격 비교 리포트 (미시구조 트리 vs 벤치마크)
"""

import logging
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from microtree.errors import ConfigError
from microtree.pricing.options import PricingResult
from microtree.types import MaybeFloat, UndefinedValue

logger = logging.getLogger(__name__)


class PriceComparison(BaseModel):
    """결과 하나의 벤치마크 대비 차이"""

    model_config = ConfigDict(frozen=True)

    method: str
    price: float
    absolute_difference: float = Field(description="price - benchmark")
    relative_difference: MaybeFloat = Field(description="(price - benchmark) / benchmark")
    relative_difference_rounded: MaybeFloat = Field(description="센트 단위 반올림 가격으로 계산한 상대차")
    std_error: Optional[float] = None


class ComparisonReport(BaseModel):
    """가격결정 비교 리포트"""

    benchmark_method: str
    benchmark_price: float
    comparisons: List[PriceComparison]
    historical_vol: Optional[float] = Field(default=None, description="데이터 연율 변동성")
    model_implied_vol: Optional[float] = Field(default=None, description="루트 상태 연율 내재변동성")
    vol_difference_pp: Optional[float] = Field(default=None, description="(모델 - 역사적) 변동성, %p")
    timings: Dict[str, float] = Field(default_factory=dict, description="node_count, build_seconds, pricing_seconds")


def _relative(diff: float, base: float) -> MaybeFloat:
    if base == 0.0:
        return UndefinedValue(reason="zero_benchmark")
    return diff / base


def compare_report(
    results: Sequence[PricingResult],
    benchmark_method: str = "black_scholes",
    historical_vol: Optional[float] = None,
    model_implied_vol: Optional[float] = None,
) -> ComparisonReport:
    """
    벤치마크 대비 절대 / 상대 차이

    benchmark_method 결과가 없으면 마지막 결과를 벤치마크로 사용합니다.

    Raises:
        ConfigError: 결과가 2개 미만
    """
    if len(results) < 2:
        raise ConfigError(f"비교하려면 결과가 2개 이상 필요합니다: {len(results)}")
    benchmark = next((r for r in results if r.method == benchmark_method), results[-1])
    base = benchmark.price
    base_cents = round(base, 2)

    comparisons = []
    timings: Dict[str, float] = {}
    for result in results:
        diff = result.price - base
        comparisons.append(
            PriceComparison(
                method=result.method,
                price=result.price,
                absolute_difference=diff,
                relative_difference=_relative(diff, base),
                relative_difference_rounded=_relative(round(result.price, 2) - base_cents, base_cents),
                std_error=result.std_error,
            )
        )
        if result.method == "tree":
            for key in ("node_count", "build_seconds", "pricing_seconds"):
                if key in result.diagnostics:
                    timings[key] = result.diagnostics[key]

    vol_diff = None
    if historical_vol is not None and model_implied_vol is not None:
        vol_diff = (model_implied_vol - historical_vol) * 100.0

    report = ComparisonReport(
        benchmark_method=benchmark.method,
        benchmark_price=base,
        comparisons=comparisons,
        historical_vol=historical_vol,
        model_implied_vol=model_implied_vol,
        vol_difference_pp=vol_diff,
        timings=timings,
    )
    logger.info(f"가격 비교: benchmark={benchmark.method} {base:.4f}, 결과 {len(results)}개")
    return report
