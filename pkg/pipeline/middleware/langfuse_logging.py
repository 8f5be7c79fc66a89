"""
Langfuse Stage Logging Middleware

파이프라인 단계 실행을 Langfuse span으로 기록하는 middleware입니다.
"""

from typing import Any, Dict, Mapping

from langfuse import get_client

from pipeline.middleware.base import StageCallRequest, StageHandler, StageMiddleware, StageUpdate

# span input/output에 그대로 싣는 스칼라 타입
_SCALARS = (str, int, float, bool, type(None))


def summarize_values(values: Mapping[str, Any]) -> Dict[str, Any]:
    """state 값 요약: 스칼라와 리스트는 그대로, 나머지는 타입 이름"""
    summary: Dict[str, Any] = {}
    for key, value in values.items():
        if isinstance(value, _SCALARS):
            summary[key] = value
        elif isinstance(value, list) and all(isinstance(v, _SCALARS) for v in value):
            summary[key] = list(value)
        else:
            summary[key] = type(value).__name__
    return summary


class LangfuseStageLoggingMiddleware(StageMiddleware):
    """
    단계 호출을 Langfuse에 자동으로 로깅하는 middleware

    - 단계 시작 시: state 요약과 metadata를 span으로 기록
    - 단계 완료 시: state 업데이트 요약을 span output에 기록
    - 에러 발생 시: 에러 정보를 span에 기록하고 다시 raise

    Args:
        langfuse_client: Langfuse client (None이면 get_client()로 자동 초기화)
        verbose: 로그 출력 여부 (기본값: True)
        log_errors: 에러도 Langfuse에 로깅할지 여부 (기본값: True)
    """

    def __init__(
        self,
        langfuse_client=None,
        verbose: bool = True,
        log_errors: bool = True,
    ):
        self.verbose = verbose
        self.log_errors = log_errors

        if langfuse_client is None:
            try:
                self.langfuse_client = get_client()
                if self.verbose:
                    print("[✅] LangfuseStageLoggingMiddleware initialized")
            except Exception as e:
                if self.verbose:
                    print(f"[⚠️] LangfuseStageLoggingMiddleware initialization failed: {e}")
                self.langfuse_client = None
        else:
            self.langfuse_client = langfuse_client
            if self.verbose:
                print("[✅] LangfuseStageLoggingMiddleware initialized with provided client")

    def wrap_stage_call(self, request: StageCallRequest, handler: StageHandler) -> StageUpdate:
        if not self.langfuse_client:
            return handler(request)

        metadata = {"stage_name": request.stage_name, **request.metadata}
        span = None
        try:
            with self.langfuse_client.start_as_current_observation(
                as_type="span",
                name=f"stage:{request.stage_name}",
                input=summarize_values(request.state),
                metadata=metadata,
            ) as span:
                result = handler(request)
                span.update(output=summarize_values(result))
                if self.verbose:
                    print(f"[📊] Langfuse logged stage: {request.stage_name}")
                return result

        except Exception as e:
            if self.log_errors and span is not None:
                try:
                    span.update(output={"error": str(e), "error_type": type(e).__name__}, level="ERROR")
                except Exception:
                    pass  # 원래 에러를 전파
            if self.verbose:
                print(f"[⚠️] Stage error logged to Langfuse: {request.stage_name} - {e}")
            raise
