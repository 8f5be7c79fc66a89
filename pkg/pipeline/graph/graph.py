"""
Microtree Pipeline Workflow - LangGraph StateGraph 기반

노드 기반 워크플로우:
1. synth / ingest → 분봉 + 요약 통계
2. features → train → calibrate → build_tree → price → report
각 단계 뒤 조건부 엣지로 에러가 있으면 error 노드로 라우팅합니다.
"""

import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

from langfuse import get_client
from langgraph.graph import END, StateGraph

from microtree.errors import ConfigError
from pipeline.config import PipelineConfig
from pipeline.graph.nodes import STAGE_NODES
from pipeline.graph.state import PipelineState
from pipeline.middleware import (
    LangfuseStageLoggingMiddleware,
    StageCallRequest,
    StageErrorHandlerMiddleware,
    StageMiddleware,
    chain_middlewares,
)

DOWNSTREAM_STAGES = ("features", "train", "calibrate", "build_tree", "price", "report")


def full_pipeline(config: PipelineConfig) -> List[str]:
    """run 명령의 단계 순서 (입력 CSV가 있으면 ingest, 없으면 synth)"""
    market = "ingest" if config.input_csv else "synth"
    return [market, *DOWNSTREAM_STAGES]


class MicrotreePipelineGraph:
    """미시구조 트리 가격결정 파이프라인 그래프 (LangGraph StateGraph 기반)"""

    def __init__(
        self,
        config: PipelineConfig,
        stages: Optional[Sequence[str]] = None,
        middlewares: Optional[List[StageMiddleware]] = None,
    ):
        """
        MicrotreePipelineGraph 초기화

        Args:
            config: 파이프라인 설정
            stages: 실행할 단계 (None이면 전체 파이프라인)
            middlewares: 단계 middleware (None이면 에러 처리 + 선택적 Langfuse 로깅)

        Raises:
            ConfigError: 알 수 없는 단계 이름
        """
        self.config = config
        self.stages = list(stages) if stages else full_pipeline(config)
        unknown = [s for s in self.stages if s not in STAGE_NODES]
        if unknown:
            raise ConfigError(f"알 수 없는 단계입니다: {', '.join(unknown)}")

        self._say(f"[🤖] Initializing pipeline graph: {' → '.join(self.stages)}")

        self._init_langfuse()
        if middlewares is None:
            middlewares = [StageErrorHandlerMiddleware()]
            if self.langfuse_client:
                middlewares.append(
                    LangfuseStageLoggingMiddleware(langfuse_client=self.langfuse_client, verbose=config.verbose)
                )
        self.middlewares = middlewares

        self.graph = self._build_graph()

    def _say(self, message: str) -> None:
        if self.config.verbose:
            print(message, file=sys.stderr)

    def _init_langfuse(self):
        """Langfuse 초기화"""
        if not self.config.use_langfuse:
            self.langfuse_client = None
            return

        try:
            self.langfuse_client = get_client()
            self._say(f"[✅] Langfuse initialized: {os.getenv('LANGFUSE_BASE_URL', 'default')}")
        except Exception as e:
            self._say(f"[⚠️] Langfuse initialization failed: {e}")
            self.langfuse_client = None

    def _build_graph(self):
        """단계 목록으로 그래프 빌드"""
        workflow = StateGraph(PipelineState)

        for name in self.stages:
            workflow.add_node(name, self._stage_node(name))
        workflow.add_node("error", self._error_node)

        workflow.set_entry_point(self.stages[0])

        # 각 단계 → 다음 단계 or error
        targets = [*self.stages[1:], END]
        for name, target in zip(self.stages, targets):
            workflow.add_conditional_edges(name, self._route_to(target), {target: target, "error": "error"})

        workflow.add_edge("error", END)

        return workflow.compile()

    # ========================================================================
    # 노드 함수들
    # ========================================================================

    def _stage_node(self, name: str) -> Callable[[PipelineState], Dict[str, Any]]:
        stage = STAGE_NODES[name]

        def handler(request: StageCallRequest) -> Dict[str, Any]:
            return stage(request.state)

        wrapped = chain_middlewares(self.middlewares, handler)

        def node(state: PipelineState) -> Dict[str, Any]:
            self._say(f"[▶️] Stage: {name}")
            return wrapped(StageCallRequest(stage_name=name, state=state, metadata={"seed": self.config.seed}))

        return node

    @staticmethod
    def _route_to(target: str) -> Callable[[PipelineState], str]:
        def route(state: PipelineState) -> str:
            return "error" if state.get("error") else target

        return route

    def _error_node(self, state: PipelineState) -> Dict[str, Any]:
        """에러 노드: 메시지 출력 후 종료"""
        self._say(f"[❌] {state.get('error')} (exit {state.get('exit_code')})")
        return {}

    # ========================================================================
    # 외부 인터페이스
    # ========================================================================

    def invoke(self) -> Dict[str, Any]:
        """
        워크플로우 실행

        Returns:
            최종 state (exit_code 0이면 성공)
        """
        initial_state: PipelineState = {
            "config": self.config,
            "artifacts": [],
            "completed_stages": [],
            "exit_code": 0,
        }
        result = self.graph.invoke(initial_state)
        if self.langfuse_client:
            try:
                self.langfuse_client.flush()
            except Exception as e:
                self._say(f"[⚠️] Langfuse flush failed: {e}")
        if not result.get("error"):
            self._say(f"[✅] Completed: {', '.join(result.get('completed_stages', []))}")
        return result


def create_pipeline_graph(
    config: PipelineConfig,
    stages: Optional[Sequence[str]] = None,
    middlewares: Optional[List[StageMiddleware]] = None,
) -> MicrotreePipelineGraph:
    """파이프라인 그래프 생성"""
    return MicrotreePipelineGraph(config, stages=stages, middlewares=middlewares)
