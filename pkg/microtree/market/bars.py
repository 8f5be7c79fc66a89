"""
분봉(OHLCV) 데이터 로딩 / 검증 / 저장

CSV 형식:
    timestamp,open,high,low,close,volume,num_ticks
    2025-01-02T14:30:00,600.0,600.5,599.8,600.2,120000,310

- timestamp: ISO-8601 UTC (YYYY-MM-DDTHH:MM:SS)
- 거래량/틱 수 0인 분봉도 유지합니다 (제외하지 않음)
"""

import io
import logging
import re
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from microtree.errors import EmptyInputError, ParseError, ValidationError

logger = logging.getLogger(__name__)

BAR_COLUMNS: Tuple[str, ...] = ("timestamp", "open", "high", "low", "close", "volume", "num_ticks")
PRICE_COLUMNS: Tuple[str, ...] = ("open", "high", "low", "close")
COUNT_COLUMNS: Tuple[str, ...] = ("volume", "num_ticks")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"

Source = Union[str, Path, BinaryIO, TextIO, bytes]


class Bar(BaseModel):
    """1분 OHLCV 레코드"""

    model_config = ConfigDict(frozen=True)

    timestamp: datetime = Field(description="UTC 분 단위 시각")
    open: float = Field(gt=0, description="시가")
    high: float = Field(gt=0, description="고가")
    low: float = Field(gt=0, description="저가")
    close: float = Field(gt=0, description="종가")
    volume: int = Field(ge=0, description="거래량 (주)")
    num_ticks: int = Field(ge=0, description="틱 수")

    @model_validator(mode="after")
    def _check_ohlc(self) -> "Bar":
        if self.low > min(self.open, self.close):
            raise ValueError(f"low({self.low})가 min(open, close)보다 큽니다")
        if self.high < max(self.open, self.close):
            raise ValueError(f"high({self.high})가 max(open, close)보다 작습니다")
        if self.low > self.high:
            raise ValueError(f"low({self.low}) > high({self.high})")
        return self


class BarSeries(BaseModel):
    """
    시간순 분봉 시퀀스

    내부적으로 pandas DataFrame(frame)으로 보관합니다. 직접 생성하지 말고
    from_frame()을 사용하세요 (불변식 검증 포함).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    symbol: str = Field(description="종목 식별자")
    frame: pd.DataFrame = Field(description="BAR_COLUMNS 순서의 DataFrame, timestamp 엄격 증가")

    @classmethod
    def from_frame(
        cls, frame: pd.DataFrame, symbol: str, line_numbers: Optional[Sequence[int]] = None
    ) -> "BarSeries":
        """
        DataFrame을 검증하고 BarSeries 생성

        Args:
            frame: BAR_COLUMNS 컬럼을 가진 DataFrame
            symbol: 종목 식별자
            line_numbers: 행별 원본 줄 번호 (None이면 헤더 다음 줄 = 2부터 연속)

        Raises:
            EmptyInputError: 행이 없는 경우
            ValidationError: OHLC 불변식 / 시간 순서 위반
        """
        if len(frame) == 0:
            raise EmptyInputError("분봉 데이터가 비어 있습니다")

        frame = frame.loc[:, list(BAR_COLUMNS)].copy()
        frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
        for col in PRICE_COLUMNS:
            frame[col] = frame[col].astype("float64")
        for col in COUNT_COLUMNS:
            frame[col] = frame[col].astype("int64")
        frame = frame.reset_index(drop=True)
        lines = np.arange(len(frame)) + 2 if line_numbers is None else np.asarray(line_numbers, dtype=np.int64)

        _validate_invariants(frame, lines)

        # 정렬 후 중복 시각 검사 (원래 줄 번호를 보존)
        stamps = frame["timestamp"].dt.tz_convert(None).to_numpy()
        order = np.argsort(stamps, kind="stable")
        frame = frame.iloc[order].reset_index(drop=True)
        original_lines = lines[order]
        deltas = np.diff(stamps[order].astype("int64"))
        bad = np.flatnonzero(deltas <= 0)
        if bad.size:
            line = int(original_lines[bad[0] + 1])
            raise ValidationError(
                f"{line}번째 줄: timestamp {frame['timestamp'].iloc[bad[0] + 1]}가 중복되어 엄격 증가 순서가 아닙니다",
                row=line,
            )

        return cls(symbol=symbol, frame=frame)

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        return self.symbol == other.symbol and self.frame.equals(other.frame)

    __hash__ = None  # type: ignore[assignment]

    def __getitem__(self, item: slice) -> "BarSeries":
        if not isinstance(item, slice):
            raise TypeError("BarSeries는 slice 인덱싱만 지원합니다")
        sub = self.frame.iloc[item].reset_index(drop=True)
        return BarSeries(symbol=self.symbol, frame=sub)

    @property
    def bars(self) -> List[Bar]:
        """Bar 객체 리스트 (검증 생략)"""
        return [
            Bar.model_construct(**{k: (v.to_pydatetime() if k == "timestamp" else v) for k, v in row.items()})
            for row in self.frame.to_dict("records")
        ]

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.frame["timestamp"])

    def column(self, name: str) -> np.ndarray:
        """컬럼을 numpy 배열로 반환"""
        return self.frame[name].to_numpy()


def _validate_invariants(frame: pd.DataFrame, lines: np.ndarray) -> None:
    """행 단위 OHLC / 거래량 불변식 검사 (첫 위반 행을 보고)"""
    o, h, l, c = (frame[col].to_numpy() for col in PRICE_COLUMNS)
    checks = [
        (~(np.isfinite(o) & np.isfinite(h) & np.isfinite(l) & np.isfinite(c)), "가격이 유한하지 않습니다"),
        ((o <= 0) | (h <= 0) | (l <= 0) | (c <= 0), "가격은 0보다 커야 합니다"),
        (l > h, "low > high"),
        (l > np.minimum(o, c), "low > min(open, close)"),
        (h < np.maximum(o, c), "high < max(open, close)"),
        ((frame["volume"].to_numpy() < 0) | (frame["num_ticks"].to_numpy() < 0), "volume/num_ticks는 0 이상이어야 합니다"),
    ]
    for mask, reason in checks:
        bad = np.flatnonzero(mask)
        if bad.size:
            idx = int(bad[0])
            line = int(lines[idx])
            row = frame.iloc[idx]
            raise ValidationError(
                f"{line}번째 줄 OHLC 불변식 위반 ({reason}): "
                f"open={row['open']}, high={row['high']}, low={row['low']}, close={row['close']}",
                row=line,
            )


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return Path(source).read_text(encoding="utf-8")


def load_bars(source: Source, symbol: str) -> BarSeries:
    """
    CSV 분봉 데이터 로드 + 검증

    Args:
        source: 파일 경로, 바이트 스트림, 텍스트 스트림 또는 bytes
        symbol: 종목 식별자

    Returns:
        BarSeries: 검증되고 시간순 정렬된 시퀀스

    Raises:
        EmptyInputError: 빈 파일 / 헤더만 있는 파일
        ParseError: CSV 형식 오류 (line에 줄 번호)
        ValidationError: OHLC 불변식 위반, 중복 timestamp
    """
    text = _read_text(source)
    if not text.strip():
        raise EmptyInputError("빈 CSV 입력입니다")

    header = text.splitlines()[0].strip().split(",")
    if tuple(h.strip() for h in header) != BAR_COLUMNS:
        raise ParseError(f"1번째 줄: 헤더가 {','.join(BAR_COLUMNS)} 이어야 합니다 (입력: {','.join(header)})", line=1)

    try:
        raw = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        raise ParseError(f"CSV 파싱 실패: {e}", line=line) from e

    # 빈 줄은 버리되 원본 줄 번호는 유지
    blank = raw.fillna("").apply(lambda col: col.str.strip()).eq("").all(axis=1).to_numpy()
    lines = raw.index.to_numpy()[~blank] + 2
    raw = raw.loc[~blank].reset_index(drop=True)
    if len(raw) == 0:
        raise EmptyInputError("CSV에 데이터 행이 없습니다")

    parsed = pd.DataFrame(index=raw.index)
    parsed["timestamp"] = pd.to_datetime(raw["timestamp"].str.strip(), format=TIMESTAMP_FORMAT, errors="coerce", utc=True)
    _raise_first_unparsed(raw["timestamp"], parsed["timestamp"].isna(), "timestamp", lines)

    for col in PRICE_COLUMNS + COUNT_COLUMNS:
        values = pd.to_numeric(raw[col].str.strip(), errors="coerce")
        _raise_first_unparsed(raw[col], values.isna(), col, lines)
        parsed[col] = values.astype("float64")

    for col in COUNT_COLUMNS:
        values = parsed[col].to_numpy()
        non_int = np.flatnonzero(values != np.floor(values))
        if non_int.size:
            line = int(lines[non_int[0]])
            raise ParseError(f"{line}번째 줄: {col}는 정수여야 합니다 ({raw[col].iloc[non_int[0]]})", line=line)
        parsed[col] = values.astype("int64")

    # 숫자 변환은 round-trip 정밀도를 보장하도록 float()로 다시 파싱
    for col in PRICE_COLUMNS:
        parsed[col] = np.array([float(v) for v in raw[col].str.strip()], dtype="float64")

    series = BarSeries.from_frame(parsed, symbol=symbol, line_numbers=lines)
    logger.info(f"분봉 로드 완료: symbol={symbol}, rows={len(series)}")
    return series


def _raise_first_unparsed(raw: pd.Series, mask: pd.Series, col: str, lines: np.ndarray) -> None:
    bad = np.flatnonzero(mask.to_numpy())
    if bad.size:
        line = int(lines[bad[0]])
        raise ParseError(f"{line}번째 줄: {col} 값을 해석할 수 없습니다 ({raw.iloc[bad[0]]!r})", line=line)


def dump_bars(series: BarSeries, target: Optional[Union[str, Path, TextIO]] = None) -> str:
    """
    BarSeries를 CSV 텍스트로 직렬화 (load_bars와 비트 단위 round-trip)

    Args:
        series: 저장할 시퀀스
        target: 파일 경로 또는 텍스트 스트림 (None이면 문자열만 반환)

    Returns:
        CSV 텍스트
    """
    frame = series.frame
    stamps = frame["timestamp"].dt.strftime(TIMESTAMP_FORMAT).tolist()
    columns = [frame[col].tolist() for col in BAR_COLUMNS[1:]]
    lines = [",".join(BAR_COLUMNS)]
    for i, stamp in enumerate(stamps):
        o, h, l, c, v, n = (col[i] for col in columns)
        lines.append(f"{stamp},{o!r},{h!r},{l!r},{c!r},{int(v)},{int(n)}")
    text = "\n".join(lines) + "\n"

    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    logger.info(f"분봉 저장 완료: rows={len(series)}")
    return text
