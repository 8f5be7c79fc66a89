"""
파이프라인 단계 노드

각 노드는 PipelineState를 받아 state 업데이트 dict를 반환합니다.
입력은 state에 있으면 그대로 쓰고, 없으면 이전 단계 산출물 파일에서 읽습니다
(파일이 없으면 MissingArtifactError).
"""

import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from microtree.calibration.states import StateTable, calibrate_all, load_state_table, save_state_table
from microtree.errors import ConfigError, MissingArtifactError
from microtree.features.microstructure import FEATURE_FAMILIES, FeatureMatrix, build_features, dump_features
from microtree.forest.ensemble import (
    Forest,
    feature_importance,
    grouped_importance,
    load_forest,
    predict_proba,
    predict_proba_batch,
    save_forest,
    train,
)
from microtree.forest.evaluation import evaluate_forest
from microtree.lattice.builder import PricingTree, build_tree, dump_tree
from microtree.market.bars import BarSeries, dump_bars, load_bars
from microtree.market.summary import historical_volatility, intraday_volume_profile, log_returns, summarize
from microtree.market.synthesizer import synthesize_bars
from microtree.pricing.backward import price_tree
from microtree.pricing.benchmarks import black_scholes, price_crr
from microtree.pricing.comparison import compare_report
from microtree.pricing.monte_carlo import price_monte_carlo
from microtree.pricing.options import PricingResult
from pipeline.artifacts import read_json, require, to_jsonable, write_csv, write_json
from pipeline.config import PipelineConfig
from pipeline.graph.state import PipelineState

StageNode = Callable[[PipelineState], Dict[str, Any]]

RETURN_HISTOGRAM_BINS = 100
OFI_HISTOGRAM_BINS = 50
# 라벨 셔플 RNG 스트림 (포레스트 스트림과 분리)
SHUFFLE_STREAM = 1


def _say(config: PipelineConfig, message: str) -> None:
    if config.verbose:
        print(message, file=sys.stderr)


# ============================================================================
# 입력 조회 (state 우선, 없으면 산출물 파일)
# ============================================================================


def get_series(state: PipelineState) -> BarSeries:
    if "series" in state:
        return state["series"]
    config = state["config"]
    return load_bars(require(config.artifact("bars")), config.symbol)


def get_matrix(state: PipelineState) -> FeatureMatrix:
    if "matrix" in state:
        return state["matrix"]
    return build_features(get_series(state), session=state["config"].generator.session)


def get_forest(state: PipelineState) -> Forest:
    if "forest" in state:
        return state["forest"]
    return load_forest(state["config"].artifact("model"))


def get_table(state: PipelineState) -> StateTable:
    if "table" in state:
        return state["table"]
    return load_state_table(state["config"].artifact("state_table"))


def get_historical_vol(state: PipelineState) -> float:
    if "historical_vol" in state:
        return state["historical_vol"]
    config = state["config"]
    return historical_volatility(get_series(state), minutes_per_year=config.calibration.minutes_per_year)


def get_spot(state: PipelineState) -> float:
    """옵션 spot (설정값이 없으면 마지막 종가)"""
    config = state["config"]
    if config.option.spot is not None:
        return config.option.spot
    return float(get_series(state).column("close")[-1])


def get_root_hint(state: PipelineState) -> float:
    """루트 p_hint: 설정값 > 마지막 피처 행의 포레스트 확률 > 0.5"""
    config = state["config"]
    if config.tree.root_p_hint is not None:
        return config.tree.root_p_hint
    if "probs" in state:
        return float(state["probs"][-1])
    try:
        forest = get_forest(state)
        matrix = get_matrix(state)
    except MissingArtifactError as e:
        _say(config, f"[⚠️] 루트 p_hint를 계산할 수 없어 0.5를 사용합니다 ({e.path})")
        return 0.5
    return predict_proba(forest, matrix.X[-1])


# ============================================================================
# 시장 데이터 단계
# ============================================================================


def _market_update(state: PipelineState, series: BarSeries, stage: str) -> Dict[str, Any]:
    config = state["config"]
    bars_path = config.artifact("bars")
    dump_bars(series, bars_path)
    summary = summarize(series)
    hist_vol = historical_volatility(series, minutes_per_year=config.calibration.minutes_per_year)
    summary_path = write_json(
        config.artifact("summary"),
        {"symbol": series.symbol, **summary.model_dump(), "historical_vol": hist_vol},
    )
    _say(config, f"[✅] {len(series):,} bars → {bars_path} (historical vol {hist_vol:.4f})")
    return {
        "series": series,
        "summary": summary,
        "historical_vol": hist_vol,
        "artifacts": [str(bars_path), str(summary_path)],
        "completed_stages": [stage],
    }


def synth_node(state: PipelineState) -> Dict[str, Any]:
    """합성 분봉 생성 → bars.csv, summary.json"""
    config = state["config"]
    generator = config.generator.model_copy(update={"symbol": config.symbol})
    _say(config, f"[🔨] Synthesizing {generator.n_bars:,} bars (seed={config.seed})...")
    series = synthesize_bars(generator, seed=config.seed)
    return _market_update(state, series, "synth")


def ingest_node(state: PipelineState) -> Dict[str, Any]:
    """사용자 CSV 검증 → 정규화된 bars.csv, summary.json"""
    config = state["config"]
    if config.input_csv is None:
        raise ConfigError("ingest에는 입력 CSV 경로(--input)가 필요합니다")
    _say(config, f"[📦] Loading bars from {config.input_csv}...")
    series = load_bars(require(config.input_csv), config.symbol)
    return _market_update(state, series, "ingest")


def features_node(state: PipelineState) -> Dict[str, Any]:
    """bars → features.csv"""
    config = state["config"]
    matrix = build_features(get_series(state), session=config.generator.session)
    path = config.artifact("features")
    dump_features(matrix, path)
    _say(config, f"[✅] {len(matrix):,} feature rows → {path}")
    return {"matrix": matrix, "artifacts": [str(path)], "completed_stages": ["features"]}


# ============================================================================
# 학습 / 캘리브레이션
# ============================================================================


def train_node(state: PipelineState) -> Dict[str, Any]:
    """
    포레스트 학습 → model.json, eval_report.json

    평가는 시간순 홀드아웃 + walk-forward 교차검증이고, 저장하는 모델과
    리포트의 중요도는 전체 행으로 학습한 포레스트 기준입니다.
    """
    config = state["config"]
    evaluation = config.evaluation
    matrix = get_matrix(state)
    training = matrix
    if evaluation.shuffle_labels:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, SHUFFLE_STREAM]))
        training = matrix.with_labels(rng.permutation(matrix.y))
        _say(config, "[⚠️] Labels shuffled (signal destroyed)")

    forest_config = config.forest_config
    _say(config, f"[🔨] Training forest: {forest_config.n_trees} trees on {len(training):,} rows...")
    report = evaluate_forest(
        training,
        forest_config,
        n_folds=evaluation.n_folds,
        test_fraction=evaluation.test_fraction,
        n_calibration_bins=evaluation.calibration_bins,
        with_cv=evaluation.cross_validate,
    )

    forest = train(training, forest_config)
    importances = feature_importance(forest)
    report = report.model_copy(
        update={"feature_importance": importances, "grouped_importance": grouped_importance(importances)}
    )

    model_path = config.artifact("model")
    save_forest(
        forest,
        model_path,
        metadata={"symbol": config.symbol, "n_rows": len(training), "shuffle_labels": evaluation.shuffle_labels},
    )
    report_path = write_json(config.artifact("eval_report"), report)
    cv_text = f", CV AUC {report.cv_mean_auc:.4f} ± {report.cv_std:.4f}" if report.cv_mean_auc is not None else ""
    _say(config, f"[✅] Holdout AUC {report.auc:.4f}{cv_text} → {model_path}")
    return {
        "matrix": matrix,
        "forest": forest,
        "eval_report": report,
        "artifacts": [str(model_path), str(report_path)],
        "completed_stages": ["train"],
    }


def calibrate_node(state: PipelineState) -> Dict[str, Any]:
    """포레스트 확률 + 다음 수익률 → state_table.json"""
    config = state["config"]
    calibration = config.calibration
    matrix = get_matrix(state)
    forest = get_forest(state)
    probs = predict_proba_batch(forest, matrix.X)
    _say(config, f"[🔨] Calibrating {calibration.n_bins} states (dt_tree={config.dt_tree:.6g})...")
    table = calibrate_all(
        probs,
        matrix.next_returns,
        r=calibration.r,
        dt_minute=calibration.dt_minute,
        dt_tree=config.dt_tree,
        n_bins=calibration.n_bins,
        w1=calibration.w1,
        w2=calibration.w2,
        min_samples=calibration.min_samples,
    )
    path = config.artifact("state_table")
    save_state_table(table, path)
    summary = table.summary()
    _say(
        config,
        f"[✅] {summary.n_states} states ({summary.n_sparse} pooled, {summary.n_optimized} optimized) → {path}",
    )
    return {
        "matrix": matrix,
        "forest": forest,
        "probs": probs,
        "table": table,
        "artifacts": [str(path)],
        "completed_stages": ["calibrate"],
    }


# ============================================================================
# 트리 / 가격결정
# ============================================================================


def _build_tree(state: PipelineState, spot: float, root_hint: float) -> PricingTree:
    config = state["config"]
    tree_config = config.tree
    return build_tree(
        spot,
        tree_config.steps,
        config.calibration.r,
        config.dt_tree,
        get_table(state),
        root_p_hint=root_hint,
        max_nodes_per_level=tree_config.max_nodes_per_level,
        epsilon=tree_config.momentum_epsilon,
        history_length=tree_config.history_length,
        node_cap=tree_config.node_cap,
        w_price=tree_config.w_price,
        w_hist=tree_config.w_hist,
    )


def build_tree_node(state: PipelineState) -> Dict[str, Any]:
    """상태 테이블 → tree.json"""
    config = state["config"]
    spot = get_spot(state)
    root_hint = get_root_hint(state)
    _say(config, f"[🔨] Building tree: N={config.tree.steps}, S0={spot:.4f}, p_hint={root_hint:.4f}...")
    tree = _build_tree(state, spot, root_hint)
    path = config.artifact("tree")
    dump_tree(tree, path)
    _say(
        config,
        f"[✅] {tree.n_nodes:,} nodes in {tree.build_seconds:.3f}s "
        f"(martingale error {tree.max_local_martingale_error():.2e}) → {path}",
    )
    return {"tree": tree, "artifacts": [str(path)], "completed_stages": ["build_tree"]}


def _reusable_tree(state: PipelineState, spot: float) -> Optional[PricingTree]:
    tree = state.get("tree")
    if tree is None or tree.N != state["config"].tree.steps or float(tree.price[0]) != spot:
        return None
    return tree


def price_node(state: PipelineState) -> Dict[str, Any]:
    """설정된 방법들로 가격결정 → pricing_report.json"""
    config = state["config"]
    option = config.option
    methods: List[str] = list(option.methods)
    spot = get_spot(state)
    spec = option.spec(spot, config.calibration.r)

    needs_vol = any(m in ("crr", "black_scholes") for m in methods)
    hist_vol: Optional[float]
    try:
        hist_vol = get_historical_vol(state)
    except MissingArtifactError:
        if needs_vol and option.vol is None:
            raise
        hist_vol = None
    vol = option.vol if option.vol is not None else hist_vol

    needs_table = any(m in ("tree", "mc") for m in methods)
    root_hint = get_root_hint(state) if needs_table else None
    table = get_table(state) if needs_table else None

    results: List[PricingResult] = []
    tree: Optional[PricingTree] = None
    for method in methods:
        _say(config, f"[🔨] Pricing {spec.kind} K={spec.strike:.4f} T={spec.maturity:.6f} with {method}...")
        if method == "tree":
            tree = _reusable_tree(state, spot) or _build_tree(state, spot, root_hint)
            result = price_tree(tree, spec)
            diagnostics = {**result.diagnostics, "max_local_martingale_error": tree.max_local_martingale_error()}
            result = result.model_copy(update={"diagnostics": diagnostics})
        elif method == "mc":
            result = price_monte_carlo(
                table,
                spot,
                spec,
                N=config.tree.steps,
                M=option.paths,
                seed=config.seed,
                root_p_hint=root_hint,
                epsilon=config.tree.momentum_epsilon,
                history_length=config.tree.history_length,
            )
        elif method == "crr":
            result = price_crr(spot, spec, vol, option.crr_steps)
        else:
            result = black_scholes(spot, spec, vol)
        results.append(result)
        std_text = f" ± {result.std_error:.4f}" if result.std_error is not None else ""
        _say(config, f"[✅] {method}: {result.price:.4f}{std_text}")

    model_vol = table.state_for(root_hint).implied_vol_annual if table is not None else None
    comparison = compare_report(results, "black_scholes", hist_vol, model_vol) if len(results) >= 2 else None

    report = {
        "symbol": config.symbol,
        "option": spec,
        "spot": spot,
        "vol": vol,
        "historical_vol": hist_vol,
        "steps": config.tree.steps,
        "root_p_hint": root_hint,
        "results": results,
        "comparison": comparison,
    }
    path = write_json(config.artifact("pricing_report"), report)
    _say(config, f"[✅] Pricing report → {path}")
    update: Dict[str, Any] = {
        "pricing_report": to_jsonable(report),
        "artifacts": [str(path)],
        "completed_stages": ["price"],
    }
    if tree is not None:
        update["tree"] = tree
    return update


# ============================================================================
# 그림 데이터
# ============================================================================


def _histogram_frame(values: np.ndarray, bins: int) -> pd.DataFrame:
    counts, edges = np.histogram(values[np.isfinite(values)], bins=bins)
    return pd.DataFrame({"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts})


def report_panels(
    series: BarSeries,
    matrix: FeatureMatrix,
    eval_report: Dict[str, Any],
    table: StateTable,
    config: PipelineConfig,
) -> Dict[str, pd.DataFrame]:
    """패널 이름 → CSV로 쓸 DataFrame"""
    states = table.to_frame()
    importances = eval_report.get("feature_importance", {})
    return {
        "return_histogram": _histogram_frame(log_returns(series), RETURN_HISTOGRAM_BINS),
        "intraday_volume": intraday_volume_profile(series, config.generator.session),
        "ofi_histogram": _histogram_frame(matrix.frame["ofi"].to_numpy(dtype="float64"), OFI_HISTOGRAM_BINS),
        "roc_curve": pd.DataFrame(eval_report.get("roc_points", []), columns=["fpr", "tpr", "threshold"]),
        "calibration_curve": pd.DataFrame(
            eval_report.get("calibration_points", []), columns=["mean_predicted", "observed_frequency", "count"]
        ),
        "probability_by_outcome": pd.DataFrame(
            eval_report.get("probability_histogram", []), columns=["bin_lower", "bin_upper", "count_up", "count_down"]
        ),
        "feature_importance": pd.DataFrame(
            [
                {"feature": name, "family": FEATURE_FAMILIES.get(name, ""), "importance": value}
                for name, value in importances.items()
            ],
            columns=["feature", "family", "importance"],
        ),
        "factor_scatter": states.loc[:, ["state_id", "n_samples", "p_rf", "p_mmm", "u", "d", "implied_vol_annual"]],
        "kl_scatter": states.loc[:, ["state_id", "abs_prob_diff", "kl"]],
        "state_summary": states,
    }


def report_node(state: PipelineState) -> Dict[str, Any]:
    """이전 산출물 → report/*.csv (패널별 데이터)"""
    config = state["config"]
    if "eval_report" in state:
        eval_report = to_jsonable(state["eval_report"])
    else:
        eval_report = read_json(config.artifact("eval_report"))
    table = get_table(state)
    series = get_series(state)
    matrix = get_matrix(state)

    report_dir = config.artifact("report_dir")
    files = []
    for name, frame in report_panels(series, matrix, eval_report, table, config).items():
        files.append(str(write_csv(report_dir / f"{name}.csv", frame)))
    _say(config, f"[✅] {len(files)} figure-data files → {report_dir}")
    return {"report_files": files, "artifacts": files, "completed_stages": ["report"]}


STAGE_NODES: Dict[str, StageNode] = {
    "synth": synth_node,
    "ingest": ingest_node,
    "features": features_node,
    "train": train_node,
    "calibrate": calibrate_node,
    "build_tree": build_tree_node,
    "price": price_node,
    "report": report_node,
}
