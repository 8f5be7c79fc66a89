"""
Pipeline Package

microtree 라이브러리를 단계 파이프라인으로 묶는 오케스트레이션 레이어:
- config: PipelineConfig (기본값 < 환경 변수 < YAML < 플래그)
- artifacts: 단계 간 JSON / CSV 산출물 입출력
- graph: LangGraph StateGraph 파이프라인
- middleware: 단계 에러 처리 / Langfuse 로깅
"""

from .config import PipelineConfig, load_config
from .graph import MicrotreePipelineGraph, create_pipeline_graph

__all__ = [
    "PipelineConfig",
    "load_config",
    "MicrotreePipelineGraph",
    "create_pipeline_graph",
]
