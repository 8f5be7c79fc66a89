"""
State definitions for Microtree Pipeline Graph

LangGraph의 TypedDict 기반 상태 정의
"""

import operator
from typing import Annotated, Any, Dict, List, Optional, TypedDict

from microtree.calibration.states import StateTable
from microtree.features.microstructure import FeatureMatrix
from microtree.forest.ensemble import Forest
from microtree.forest.evaluation import EvalReport
from microtree.lattice.builder import PricingTree
from microtree.market.bars import BarSeries
from microtree.market.summary import SummaryStats
from pipeline.config import PipelineConfig


class PipelineState(TypedDict, total=False):
    """
    파이프라인 그래프 상태

    워크플로우: synth/ingest → features → train → calibrate → build_tree → price → report
    값이 없는 항목은 각 단계가 산출물 파일에서 읽습니다.
    """

    # 설정
    config: PipelineConfig

    # 단계 결과
    series: BarSeries  # 분봉
    summary: SummaryStats  # 요약 통계
    historical_vol: float  # 연율 역사적 변동성
    matrix: FeatureMatrix  # 피처 행렬
    forest: Forest  # 학습된 포레스트
    eval_report: EvalReport  # 분류 성능 리포트
    probs: Any  # 피처 행별 상승 확률 (np.ndarray)
    table: StateTable  # 상태 테이블
    tree: PricingTree  # 가격결정 트리
    pricing_report: Dict[str, Any]  # 가격 비교 리포트 (JSON dict)
    report_files: List[str]  # report 단계 CSV 경로

    # 워크플로우 제어
    artifacts: Annotated[List[str], operator.add]  # 기록한 산출물 경로
    completed_stages: Annotated[List[str], operator.add]  # 완료 단계
    error: Optional[str]  # 에러 메시지
    exit_code: int  # 종료 코드 (0 성공)
    failed_stage: Optional[str]  # 실패 단계
