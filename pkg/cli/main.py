"""
microtree CLI Entry Point

단계별 서브커맨드와 전체 파이프라인(run)을 실행합니다.

종료 코드: 0 성공, 1 예기치 않은 오류, 2 입력/설정 검증 실패, 3 리소스 한도, 4 수치 실패

Usage:
    microtree synth --bars 50000 --seed 7
    microtree train --shuffle-labels
    microtree price --method bs --spot 600 --strike 600 --days 30 --rate 0.05 --vol 0.243
    microtree run --config pipeline.yaml
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from microtree.errors import MicrotreeError
from pipeline.config import load_config
from pipeline.graph import create_pipeline_graph, full_pipeline

COMMAND_STAGES: Dict[str, List[str]] = {
    "synth": ["synth"],
    "ingest": ["ingest"],
    "features": ["features"],
    "train": ["train"],
    "calibrate": ["calibrate"],
    "build-tree": ["build_tree"],
    "price": ["price"],
    "report": ["report"],
}

# argparse dest → PipelineConfig 경로
FLAG_PATHS: Dict[str, Tuple[str, ...]] = {
    "output_dir": ("output_dir",),
    "seed": ("seed",),
    "verbose": ("verbose",),
    "use_langfuse": ("use_langfuse",),
    "symbol": ("symbol",),
    "input": ("input_csv",),
    "n_bars": ("generator", "n_bars"),
    "signal_strength": ("generator", "ofi_signal_strength"),
    "trees": ("forest", "n_trees"),
    "max_depth": ("forest", "max_depth"),
    "min_samples_leaf": ("forest", "min_samples_leaf"),
    "features_per_split": ("forest", "features_per_split"),
    "n_jobs": ("forest", "n_jobs"),
    "folds": ("evaluation", "n_folds"),
    "test_fraction": ("evaluation", "test_fraction"),
    "shuffle_labels": ("evaluation", "shuffle_labels"),
    "n_bins": ("calibration", "n_bins"),
    "w1": ("calibration", "w1"),
    "w2": ("calibration", "w2"),
    "min_samples": ("calibration", "min_samples"),
    "rate": ("calibration", "r"),
    "minutes_per_year": ("calibration", "minutes_per_year"),
    "steps": ("tree", "steps"),
    "max_nodes": ("tree", "max_nodes_per_level"),
    "epsilon": ("tree", "momentum_epsilon"),
    "history_length": ("tree", "history_length"),
    "node_cap": ("tree", "node_cap"),
    "root_p": ("tree", "root_p_hint"),
    "kind": ("option", "kind"),
    "spot": ("option", "spot"),
    "strike": ("option", "strike"),
    "days": ("option", "days"),
    "vol": ("option", "vol"),
    "paths": ("option", "paths"),
    "crr_steps": ("option", "crr_steps"),
    "method": ("option", "methods"),
}


# ============================================================================
# 인자 정의
# ============================================================================


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """서브커맨드 앞뒤 모두에서 받는 전역 플래그"""
    default = argparse.SUPPRESS if suppress else None
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=default, help="YAML/JSON 설정 파일")
    parent.add_argument("--seed", type=int, default=default, help="전역 시드")
    parent.add_argument("--log-level", default=default, help="로그 레벨 (기본: MICROTREE_LOG_LEVEL 또는 WARNING)")
    parent.add_argument("--output-dir", default=default, help="산출물 디렉터리")
    parent.add_argument(
        "--verbose", action=argparse.BooleanOptionalAction, default=default, help="진행 상황 출력 (stderr)"
    )
    parent.add_argument(
        "--langfuse", dest="use_langfuse", action=argparse.BooleanOptionalAction, default=default,
        help="단계별 Langfuse span 기록",
    )
    return parent


def _add_market_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bars", dest="n_bars", type=int, help="합성 분봉 수 (>= 100)")
    parser.add_argument("--signal-strength", type=float, help="OFI 신호 강도 [0, 1]")
    parser.add_argument("--symbol", help="종목 식별자")


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trees", type=int, help="트리 수")
    parser.add_argument("--max-depth", type=int, help="최대 깊이")
    parser.add_argument("--min-samples-leaf", type=int, help="리프 최소 표본")
    parser.add_argument("--features-per-split", type=int, help="분할당 후보 피처 수")
    parser.add_argument("--n-jobs", type=int, help="병렬 학습 스레드 수")
    parser.add_argument("--folds", type=int, help="walk-forward fold 수")
    parser.add_argument("--test-fraction", type=float, help="홀드아웃 비율")
    parser.add_argument("--shuffle-labels", action="store_true", default=None, help="라벨 셔플 (신호 파괴 검증)")


def _add_horizon_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--days", type=float, help="만기 (달력일)")
    parser.add_argument("--rate", type=float, help="무위험 이자율 (연속복리)")
    parser.add_argument("--steps", type=int, help="트리 스텝 수 N")


def _add_calibration_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-bins", type=int, help="확률 구간 수")
    parser.add_argument("--w1", type=float, help="KL 가중치")
    parser.add_argument("--w2", type=float, help="분산 오차 가중치")
    parser.add_argument("--min-samples", type=float, help="상태별 최소 표본 (inf = 전부 풀링)")
    parser.add_argument("--minutes-per-year", type=float, help="연간 분봉 수")


def _add_tree_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--spot", type=float, help="현재 가격 (기본: 마지막 종가)")
    parser.add_argument("--max-nodes", type=int, help="레벨 노드 상한 (집계)")
    parser.add_argument("--epsilon", type=float, help="모멘텀 조정 ε")
    parser.add_argument("--history-length", type=int, help="이동 이력 길이")
    parser.add_argument("--node-cap", type=int, help="전체 노드 수 상한")
    parser.add_argument("--root-p", type=float, help="루트 p_hint (기본: 마지막 피처 행의 포레스트 확률)")


def _add_option_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--method",
        help="가격결정 방법: tree | mc | crr | bs | all (쉼표로 여러 개)",
    )
    parser.add_argument("--kind", choices=["call", "put"], help="옵션 종류")
    parser.add_argument("--strike", type=float, help="행사가 (기본: ATM)")
    parser.add_argument("--vol", type=float, help="벤치마크 변동성 (기본: 역사적 변동성)")
    parser.add_argument("--paths", type=int, help="Monte Carlo 경로 수")
    parser.add_argument("--crr-steps", type=int, help="CRR 스텝 수")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microtree",
        description="Microstructure-enhanced binomial tree option pricing pipeline",
        parents=[_global_flags(suppress=False)],
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    flags = _global_flags(suppress=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(name, help=help_text, parents=[flags])

    _add_market_args(command("synth", "합성 분봉 생성"))

    ingest = command("ingest", "분봉 CSV 검증 / 정규화")
    ingest.add_argument("--input", required=True, help="입력 CSV 경로")
    ingest.add_argument("--symbol", help="종목 식별자")

    command("features", "피처 행렬 생성")
    _add_train_args(command("train", "포레스트 학습 + 평가 리포트"))

    calibrate = command("calibrate", "상태 테이블 캘리브레이션")
    _add_calibration_args(calibrate)
    _add_horizon_args(calibrate)

    build_tree = command("build-tree", "가격결정 트리 구성")
    _add_tree_args(build_tree)
    _add_horizon_args(build_tree)

    price = command("price", "옵션 가격결정 + 비교 리포트")
    _add_tree_args(price)
    _add_horizon_args(price)
    _add_option_args(price)

    command("report", "그림 데이터 CSV 생성")

    run = command("run", "전체 파이프라인 실행")
    run.add_argument("--input", help="입력 CSV (없으면 합성 데이터)")
    _add_market_args(run)
    _add_train_args(run)
    _add_calibration_args(run)
    _add_tree_args(run)
    _add_horizon_args(run)
    _add_option_args(run)

    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


# ============================================================================
# 설정 조립
# ============================================================================


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """명령행 플래그 → 설정 override dict (지정한 플래그만)"""
    overrides: Dict[str, Any] = {}
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "method" and value.strip().lower() == "all":
            continue
        target = overrides
        for key in path[:-1]:
            target = target.setdefault(key, {})
        target[path[-1]] = value
    return overrides


def configure_logging(level: Optional[str]) -> None:
    name = (level or os.getenv("MICROTREE_LOG_LEVEL") or "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _print_price_summary(state: Dict[str, Any]) -> None:
    report = state.get("pricing_report") or {}
    for result in report.get("results", []):
        line = f"{result['method']}: {result['price']:.4f}"
        if result.get("std_error") is not None:
            line += f" (std error {result['std_error']:.4f})"
        print(line)
    comparison = report.get("comparison")
    if comparison:
        for row in comparison["comparisons"]:
            rel = row["relative_difference"]
            rel_text = f"{rel * 100:+.2f}%" if isinstance(rel, (int, float)) else "undefined"
            print(f"{row['method']} vs {comparison['benchmark_method']}: {row['absolute_difference']:+.4f} ({rel_text})")


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = parse_args(argv)
    configure_logging(getattr(args, "log_level", None))

    try:
        config = load_config(getattr(args, "config", None), flag_overrides(args))
        stages = full_pipeline(config) if args.command == "run" else COMMAND_STAGES[args.command]
        graph = create_pipeline_graph(config, stages=stages)
    except MicrotreeError as e:
        print(f"[❌] {e}", file=sys.stderr)
        return e.exit_code

    result = graph.invoke()
    if result.get("error"):
        if not config.verbose:
            print(f"[❌] {result['error']}", file=sys.stderr)
        return int(result.get("exit_code") or 1)

    if "price" in stages:
        _print_price_summary(result)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
