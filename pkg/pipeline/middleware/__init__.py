"""
Stage Middleware Package

파이프라인 단계를 감싸는 middleware 컬렉션:
- Langfuse 단계 로깅 middleware
- 단계 에러 처리 middleware

Usage:
    from pipeline.middleware import LangfuseStageLoggingMiddleware, StageErrorHandlerMiddleware

    middlewares = [
        StageErrorHandlerMiddleware(),
        LangfuseStageLoggingMiddleware(verbose=True),
    ]
"""

from .base import StageCallRequest, StageMiddleware, chain_middlewares
from .error_handler import StageErrorHandlerMiddleware
from .langfuse_logging import LangfuseStageLoggingMiddleware

__all__ = [
    "StageCallRequest",
    "StageMiddleware",
    "chain_middlewares",
    "LangfuseStageLoggingMiddleware",
    "StageErrorHandlerMiddleware",
]
