"""
파이프라인 설정

우선순위: 기본값 < 환경 변수 (.env 포함) < --config YAML < 명령행 플래그

환경 변수:
- MICROTREE_OUTPUT_DIR: 산출물 디렉터리 (기본 ./output)
- MICROTREE_SEED: 전역 시드
- MICROTREE_LOG_LEVEL: 로그 레벨 (cli에서 사용)
- MICROTREE_USE_LANGFUSE: 단계별 Langfuse span 기록 여부
"""

import math
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from microtree.errors import ConfigError
from microtree.forest.ensemble import ForestConfig
from microtree.lattice.builder import DEFAULT_NODE_CAP
from microtree.lattice.transition import DEFAULT_HISTORY_LENGTH
from microtree.market.summary import DEFAULT_MINUTES_PER_YEAR
from microtree.market.synthesizer import GeneratorConfig
from microtree.pricing.options import DAYS_PER_YEAR, OptionSpec

PricingMethod = Literal["tree", "mc", "crr", "black_scholes"]
METHOD_ALIASES = {"bs": "black_scholes", "black-scholes": "black_scholes", "montecarlo": "mc", "monte_carlo": "mc"}


class ArtifactPaths(BaseModel):
    """단계별 산출물 파일명 (output_dir 기준 상대 경로 허용)"""

    bars: str = Field(default="bars.csv", description="분봉 CSV")
    summary: str = Field(default="summary.json", description="요약 통계")
    features: str = Field(default="features.csv", description="피처 행렬 CSV")
    model: str = Field(default="model.json", description="포레스트 모델")
    eval_report: str = Field(default="eval_report.json", description="분류 성능 리포트")
    state_table: str = Field(default="state_table.json", description="상태 테이블")
    tree: str = Field(default="tree.json", description="트리 덤프")
    pricing_report: str = Field(default="pricing_report.json", description="가격 비교 리포트")
    report_dir: str = Field(default="report", description="그림 데이터 CSV 디렉터리")


class EvaluationConfig(BaseModel):
    """분류기 평가 설정"""

    n_folds: int = Field(default=5, ge=2, description="walk-forward fold 수")
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0, description="홀드아웃 비율")
    calibration_bins: int = Field(default=10, ge=2)
    shuffle_labels: bool = Field(default=False, description="라벨 셔플 (신호 파괴 검증)")
    cross_validate: bool = Field(default=True, description="교차검증 수행 여부")


class CalibrationConfig(BaseModel):
    """상태 캘리브레이션 설정"""

    n_bins: int = Field(default=20, ge=2)
    w1: float = Field(default=1.0, ge=0.0, description="KL 가중치")
    w2: float = Field(default=1.0, ge=0.0, description="분산 오차 가중치")
    min_samples: Union[int, float] = Field(default=30, description="상태별 최소 표본 (inf = 전부 풀링)")
    r: float = Field(default=0.05, description="무위험 이자율 (연속복리)")
    minutes_per_year: float = Field(default=DEFAULT_MINUTES_PER_YEAR, gt=0.0)

    @field_validator("min_samples")
    @classmethod
    def _check_min_samples(cls, value: Union[int, float]) -> Union[int, float]:
        if math.isinf(value):
            return value
        if value < 1 or value != int(value):
            raise ValueError(f"min_samples는 1 이상의 정수 또는 inf여야 합니다: {value}")
        return int(value)

    @field_validator("w2")
    @classmethod
    def _check_weights(cls, value: float, info: Any) -> float:
        if value == 0.0 and info.data.get("w1", 1.0) == 0.0:
            raise ValueError("w1, w2가 모두 0일 수 없습니다")
        return value

    @property
    def dt_minute(self) -> float:
        return 1.0 / self.minutes_per_year


class TreeConfig(BaseModel):
    """트리 구성 설정"""

    steps: int = Field(default=10, ge=1, description="스텝 수 N")
    max_nodes_per_level: Optional[int] = Field(default=None, ge=1, description="레벨 노드 상한 (None = 집계 안 함)")
    momentum_epsilon: float = Field(default=0.0, ge=0.0, description="자식 p_hint 모멘텀 조정 ε")
    history_length: int = Field(default=DEFAULT_HISTORY_LENGTH, ge=1)
    node_cap: int = Field(default=DEFAULT_NODE_CAP, ge=1, description="전체 노드 수 상한")
    w_price: float = Field(default=1.0, ge=0.0)
    w_hist: float = Field(default=1.0, ge=0.0)
    root_p_hint: Optional[float] = Field(default=None, description="None이면 마지막 피처 행의 포레스트 확률")


class OptionConfig(BaseModel):
    """가격결정 대상 옵션과 방법"""

    kind: Literal["call", "put"] = "call"
    spot: Optional[float] = Field(default=None, gt=0.0, description="None이면 마지막 종가")
    strike: Optional[float] = Field(default=None, ge=0.0, description="None이면 ATM (= spot)")
    days: float = Field(default=30.0, gt=0.0, description="만기 (달력일)")
    vol: Optional[float] = Field(default=None, gt=0.0, description="벤치마크 변동성 (None이면 역사적 변동성)")
    paths: int = Field(default=200_000, ge=100, description="Monte Carlo 경로 수")
    crr_steps: int = Field(default=1000, ge=1)
    methods: List[PricingMethod] = Field(default_factory=lambda: ["tree", "black_scholes", "crr", "mc"])

    @field_validator("methods", mode="before")
    @classmethod
    def _normalize_methods(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return [METHOD_ALIASES.get(v, v) for v in value]

    @property
    def maturity(self) -> float:
        return self.days / DAYS_PER_YEAR

    def spec(self, spot: float, rate: float) -> OptionSpec:
        strike = spot if self.strike is None else self.strike
        return OptionSpec(kind=self.kind, strike=strike, maturity=self.maturity, rate=rate)


class PipelineConfig(BaseModel):
    """파이프라인 전체 설정"""

    model_config = ConfigDict(validate_assignment=True)

    output_dir: str = Field(default="output", description="산출물 디렉터리")
    input_csv: Optional[str] = Field(default=None, description="ingest 입력 CSV (None이면 합성 데이터)")
    symbol: str = "SYNTH"
    seed: int = Field(default=42, description="전역 시드")
    verbose: bool = True
    use_langfuse: bool = False
    paths: ArtifactPaths = Field(default_factory=ArtifactPaths)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    forest: ForestConfig = Field(default_factory=ForestConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    tree: TreeConfig = Field(default_factory=TreeConfig)
    option: OptionConfig = Field(default_factory=OptionConfig)

    def artifact(self, name: str) -> Path:
        """산출물 경로 (절대 경로면 그대로, 아니면 output_dir 기준)"""
        path = Path(getattr(self.paths, name))
        return path if path.is_absolute() else Path(self.output_dir) / path

    @property
    def dt_tree(self) -> float:
        return self.option.maturity / self.tree.steps

    @property
    def forest_config(self) -> ForestConfig:
        """전역 시드가 반영된 포레스트 설정"""
        return self.forest.model_copy(update={"seed": self.seed})


# ============================================================================
# 로딩
# ============================================================================


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _env_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def env_overrides() -> Dict[str, Any]:
    """MICROTREE_* 환경 변수 → 설정 dict"""
    load_dotenv()
    overrides: Dict[str, Any] = {}
    if os.getenv("MICROTREE_OUTPUT_DIR"):
        overrides["output_dir"] = os.getenv("MICROTREE_OUTPUT_DIR")
    if os.getenv("MICROTREE_SEED"):
        try:
            overrides["seed"] = int(os.getenv("MICROTREE_SEED", ""))
        except ValueError as e:
            raise ConfigError(f"MICROTREE_SEED는 정수여야 합니다: {os.getenv('MICROTREE_SEED')}") from e
    if os.getenv("MICROTREE_USE_LANGFUSE"):
        overrides["use_langfuse"] = _env_bool(os.getenv("MICROTREE_USE_LANGFUSE", ""))
    return overrides


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """YAML (또는 JSON) 설정 파일 읽기"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"설정 파일이 없습니다: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"설정 파일을 읽을 수 없습니다: {path} ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"설정 파일 최상위는 매핑이어야 합니다: {path}")
    return data


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    use_env: bool = True,
) -> PipelineConfig:
    """
    기본값 < 환경 변수 < 설정 파일 < overrides 순으로 합친 설정

    Raises:
        ConfigError: 설정 파일 오류 또는 검증 실패
    """
    data: Dict[str, Any] = {}
    if use_env:
        data = _deep_merge(data, env_overrides())
    if config_file is not None:
        data = _deep_merge(data, read_config_file(config_file))
    if overrides:
        data = _deep_merge(data, overrides)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        raise ConfigError(f"잘못된 설정값 {location}: {first.get('msg')}") from e
