"""
microtree: 미시구조 강화 이항트리 옵션 가격결정 라이브러리

market → features → forest → calibration → lattice → pricing 순서로 사용합니다.
"""

__version__ = "0.1.0"
