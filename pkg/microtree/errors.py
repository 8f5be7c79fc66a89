"""
microtree 예외 계층

모든 예외는 MicrotreeError를 상속하며 CLI 종료 코드(exit_code)를 가집니다:
- 2: 입력/설정 검증 실패
- 3: 리소스 한도 초과
- 4: 수치 계산 실패 (무차익 조건 위반, 캘리브레이션 실패)
"""

from typing import Optional


class MicrotreeError(Exception):
    """microtree 기본 예외"""

    exit_code: int = 1


# ============================================================================
# 검증 실패 (exit 2)
# ============================================================================


class ValidationError(MicrotreeError, ValueError):
    """입력 데이터가 불변식을 위반한 경우"""

    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class ParseError(ValidationError):
    """CSV 파싱 실패 (line: 헤더를 1로 센 파일 줄 번호)"""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message, row=line)
        self.line = line


class EmptyInputError(ValidationError):
    """빈 입력"""


class InsufficientDataError(ValidationError):
    """계산에 필요한 데이터가 부족한 경우"""


class ConfigError(ValidationError):
    """잘못된 설정값"""


class DomainError(ValidationError):
    """함수 정의역 밖의 입력 (음수 가격, 비유한 값 등)"""


class ShapeError(ValidationError):
    """입력 차원 불일치"""


class SpecMismatchError(ValidationError):
    """옵션 만기와 트리 스텝 구성이 맞지 않는 경우"""


class DegenerateTrainingError(ValidationError):
    """라벨이 한 클래스뿐이라 학습할 수 없는 경우"""


class UndefinedMetricError(ValidationError):
    """지표가 정의되지 않는 경우 (예: 단일 클래스 AUC)"""


class DegenerateProbabilityError(ValidationError):
    """확률이 0 또는 1이라 팩터를 풀 수 없는 경우"""


class DegenerateVolatilityError(ValidationError):
    """분산이 0이라 팩터를 풀 수 없는 경우"""


class MissingArtifactError(ValidationError):
    """이전 단계 산출물이 없는 경우"""

    def __init__(self, path: str):
        super().__init__(f"필요한 산출물 파일이 없습니다: {path}")
        self.path = path


# ============================================================================
# 리소스 한도 (exit 3)
# ============================================================================


class ResourceLimitError(MicrotreeError):
    """노드 수 / 경로 수가 설정된 한도를 넘는 경우"""

    exit_code = 3


# ============================================================================
# 수치 실패 (exit 4)
# ============================================================================


class ArbitrageViolationError(MicrotreeError):
    """e^{rΔt}가 (d, u) 구간 밖에 있어 무차익 조건이 깨진 경우"""

    exit_code = 4

    def __init__(self, message: str, state_id: Optional[int] = None):
        super().__init__(message)
        self.state_id = state_id


class CalibrationError(MicrotreeError):
    """상태 캘리브레이션 실패"""

    exit_code = 4

    def __init__(self, message: str, state_id: Optional[int] = None):
        super().__init__(message)
        self.state_id = state_id
