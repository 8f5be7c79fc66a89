"""
옵션 명세 / 가격결정 결과 / 만기 페이오프
"""

import math
from typing import Dict, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from microtree.errors import DomainError, SpecMismatchError

DAYS_PER_YEAR = 365.0

Method = Literal["tree", "mc", "crr", "black_scholes"]


class OptionSpec(BaseModel):
    """유럽형 옵션 명세"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["call", "put"] = "call"
    strike: float = Field(ge=0.0, description="행사가 (0 허용: 퇴화 행사가 검증용)")
    maturity: float = Field(gt=0.0, description="만기 (년)")
    rate: float = Field(default=0.05, description="무위험 이자율 (연속복리)")

    @classmethod
    def from_days(cls, days: float, strike: float, kind: str = "call", rate: float = 0.05) -> "OptionSpec":
        """달력일 기준 만기 (days / 365)"""
        return cls(kind=kind, strike=strike, maturity=days / DAYS_PER_YEAR, rate=rate)

    def discount(self) -> float:
        return math.exp(-self.rate * self.maturity)


class PricingResult(BaseModel):
    """가격결정 결과"""

    model_config = ConfigDict(frozen=True)

    price: float = Field(ge=0.0)
    method: Method
    n_steps: Optional[int] = None
    n_paths: Optional[int] = None
    std_error: Optional[float] = Field(default=None, ge=0.0, description="Monte Carlo 표준오차")
    diagnostics: Dict[str, float] = Field(default_factory=dict, description="노드 수, 구성/가격 계산 시간 등")


def payoff(spec: OptionSpec, S: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    만기 페이오프: call max(0, S-K), put max(0, K-S)

    Raises:
        DomainError: S < 0
    """
    values = np.asarray(S, dtype="float64")
    if np.any(values < 0.0):
        raise DomainError("가격은 음수일 수 없습니다")
    if spec.kind == "call":
        out = np.maximum(values - spec.strike, 0.0)
    else:
        out = np.maximum(spec.strike - values, 0.0)
    return float(out) if out.ndim == 0 else out


def check_maturity(spec: OptionSpec, N: int, dt: float) -> None:
    """
    |N·dt - T| <= dt/2 확인

    Raises:
        SpecMismatchError: 만기와 트리 스텝 구성이 맞지 않음
    """
    if abs(N * dt - spec.maturity) > dt / 2.0:
        raise SpecMismatchError(
            f"옵션 만기 {spec.maturity:.6g}년이 트리 N·dt = {N} × {dt:.6g} = {N * dt:.6g}년과 맞지 않습니다"
        )
