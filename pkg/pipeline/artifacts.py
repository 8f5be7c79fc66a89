"""
단계 간 산출물 입출력

JSON은 indent=2로 쓰고 inf/nan은 문자열로 바꿉니다.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
from pydantic import BaseModel

from microtree.errors import MissingArtifactError, ParseError
from microtree.types import json_float


def to_jsonable(value: Any) -> Any:
    """pydantic 모델 / numpy 스칼라 / 비유한 float를 JSON 호환 값으로"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if hasattr(value, "item"):
        return to_jsonable(value.item())
    if isinstance(value, float):
        return json_float(value) if not math.isfinite(value) else value
    return value


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Raises:
        MissingArtifactError: 파일 없음
        ParseError: JSON 파싱 실패
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}를 읽을 수 없습니다: {e}", line=e.lineno) from e


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def require(path: Union[str, Path]) -> Path:
    """존재하는 산출물 경로 (없으면 MissingArtifactError)"""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path))
    return path
