"""
Stage Middleware 기반 클래스

파이프라인 단계 호출을 감싸는 middleware 체인입니다.
목록의 첫 middleware가 가장 바깥에서 실행됩니다.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Sequence

StageUpdate = Dict[str, Any]


@dataclass(frozen=True)
class StageCallRequest:
    """단계 호출 요청"""

    stage_name: str
    state: Mapping[str, Any]
    metadata: Dict[str, Any] = field(default_factory=dict)


StageHandler = Callable[[StageCallRequest], StageUpdate]


class StageMiddleware:
    """단계 middleware 기본 구현 (그대로 통과)"""

    def wrap_stage_call(self, request: StageCallRequest, handler: StageHandler) -> StageUpdate:
        return handler(request)


def chain_middlewares(middlewares: Sequence[StageMiddleware], handler: StageHandler) -> StageHandler:
    """middleware 목록을 handler 하나로 합성"""
    wrapped = handler
    for middleware in reversed(middlewares):
        wrapped = _bind(middleware, wrapped)
    return wrapped


def _bind(middleware: StageMiddleware, inner: StageHandler) -> StageHandler:
    def call(request: StageCallRequest) -> StageUpdate:
        return middleware.wrap_stage_call(request, inner)

    return call
