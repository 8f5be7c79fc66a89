"""
Pipeline Graph Module

LangGraph StateGraph 기반 단계 파이프라인:
- state: PipelineState 정의
- nodes: 단계 노드 (synth, ingest, features, train, calibrate, build_tree, price, report)
- graph: MicrotreePipelineGraph
"""

from .graph import DOWNSTREAM_STAGES, MicrotreePipelineGraph, create_pipeline_graph, full_pipeline
from .nodes import STAGE_NODES, report_panels
from .state import PipelineState

__all__ = [
    # State
    "PipelineState",
    # Nodes
    "STAGE_NODES",
    "report_panels",
    # Graph
    "DOWNSTREAM_STAGES",
    "MicrotreePipelineGraph",
    "create_pipeline_graph",
    "full_pipeline",
]
