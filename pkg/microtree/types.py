"""
공용 타입

정의되지 않는 값(0분산 왜도, 0 기준가 대비 상대차 등)을 NaN 대신
태그가 붙은 값으로 표현합니다.
"""

import math
from typing import Any, Union

from pydantic import BaseModel, ConfigDict, Field


class UndefinedValue(BaseModel):
    """정의되지 않는 수치 (reason에 사유 기록)"""

    model_config = ConfigDict(frozen=True)

    undefined: bool = Field(default=True, description="항상 True")
    reason: str = Field(description="정의되지 않는 사유 (예: zero_variance)")


MaybeFloat = Union[float, UndefinedValue]


def is_undefined(value: Any) -> bool:
    """UndefinedValue 여부"""
    return isinstance(value, UndefinedValue)


def json_float(value: float) -> Union[float, str]:
    """JSON에 쓸 수 있도록 inf/nan을 문자열로 바꿈"""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return value
