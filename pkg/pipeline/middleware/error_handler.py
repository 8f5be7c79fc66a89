"""
Stage Error Handler Middleware

단계 실행 중 발생한 예외를 state 업데이트로 바꿔 그래프가 error 노드로
라우팅하도록 합니다.
"""

from typing import Optional

from microtree.errors import MicrotreeError
from pipeline.middleware.base import StageCallRequest, StageHandler, StageMiddleware, StageUpdate

UNEXPECTED_EXIT_CODE = 1


class StageErrorHandlerMiddleware(StageMiddleware):
    """
    단계 에러를 state 업데이트로 변환하는 middleware

    MicrotreeError는 예외의 exit_code를 그대로 쓰고, 그 밖의 예외는 1을 씁니다.

    Args:
        error_message_template: 에러 메시지 템플릿 (stage_name, error를 포함)
        include_error_details: 상세 에러 내용 포함 여부 (기본값: True)

    Example:
        ```python
        from pipeline.middleware import StageErrorHandlerMiddleware

        error_handler = StageErrorHandlerMiddleware(
            error_message_template="'{stage_name}' 단계 실패: {error}",
        )
        ```
    """

    def __init__(
        self,
        error_message_template: Optional[str] = None,
        include_error_details: bool = True,
    ):
        self.error_message_template = error_message_template or "{stage_name}: {error}"
        self.include_error_details = include_error_details

    def wrap_stage_call(self, request: StageCallRequest, handler: StageHandler) -> StageUpdate:
        try:
            return handler(request)
        except Exception as e:
            exit_code = e.exit_code if isinstance(e, MicrotreeError) else UNEXPECTED_EXIT_CODE
            if self.include_error_details:
                detail = str(e) or type(e).__name__
            else:
                detail = "An error occurred"
            error_msg = self.error_message_template.format(stage_name=request.stage_name, error=detail)
            return {
                "error": error_msg,
                "exit_code": exit_code,
                "failed_stage": request.stage_name,
            }
