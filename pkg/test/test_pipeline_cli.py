"""
파이프라인 설정 / middleware / CLI 테스트
"""

import json
import math
from contextlib import contextmanager

import numpy as np
import pytest

from cli.main import flag_overrides, main, parse_args
from microtree.errors import ConfigError, ResourceLimitError
from pipeline.artifacts import read_json, write_json
from pipeline.config import load_config
from pipeline.graph import create_pipeline_graph, full_pipeline
from pipeline.middleware import (
    LangfuseStageLoggingMiddleware,
    StageCallRequest,
    StageErrorHandlerMiddleware,
    StageMiddleware,
    chain_middlewares,
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("MICROTREE_OUTPUT_DIR", "MICROTREE_SEED", "MICROTREE_USE_LANGFUSE", "MICROTREE_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


# ============================================================================
# 설정
# ============================================================================


def test_config_precedence(tmp_path, monkeypatch):
    """기본값 < 환경 변수 < 설정 파일 < 명령행"""
    config_file = tmp_path / "pipeline.yaml"
    config_file.write_text("seed: 6\ntree:\n  steps: 4\n", encoding="utf-8")
    monkeypatch.setenv("MICROTREE_SEED", "5")
    monkeypatch.setenv("MICROTREE_OUTPUT_DIR", str(tmp_path / "env"))

    assert load_config().seed == 5
    config = load_config(config_file)
    assert config.seed == 6
    assert config.tree.steps == 4
    assert config.output_dir == str(tmp_path / "env")
    assert load_config(config_file, {"seed": 7, "tree": {"steps": None}}).seed == 7
    assert load_config(config_file, {"seed": 7}).tree.steps == 4


def test_config_defaults():
    config = load_config(use_env=False)
    assert config.seed == 42
    assert config.calibration.n_bins == 20
    assert config.tree.steps == 10
    assert config.dt_tree == pytest.approx(30 / 365 / 10)
    assert config.forest_config.seed == 42


def test_config_rejects_invalid_value():
    with pytest.raises(ConfigError):
        load_config(overrides={"tree": {"steps": 0}}, use_env=False)
    with pytest.raises(ConfigError):
        load_config(overrides={"calibration": {"w1": 0.0, "w2": 0.0}}, use_env=False)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml", use_env=False)


def test_method_aliases():
    config = load_config(overrides={"option": {"methods": "bs, tree,mc"}}, use_env=False)
    assert config.option.methods == ["black_scholes", "tree", "mc"]


def test_min_samples_accepts_infinity():
    config = load_config(overrides={"calibration": {"min_samples": math.inf}}, use_env=False)
    assert math.isinf(config.calibration.min_samples)


def test_full_pipeline_starts_with_ingest_when_input_given():
    assert full_pipeline(load_config(use_env=False))[0] == "synth"
    assert full_pipeline(load_config(overrides={"input_csv": "bars.csv"}, use_env=False))[0] == "ingest"


def test_unknown_stage_is_rejected():
    with pytest.raises(ConfigError):
        create_pipeline_graph(load_config(overrides={"verbose": False}, use_env=False), stages=["bogus"])


# ============================================================================
# 산출물 직렬화
# ============================================================================


def test_write_json_handles_non_finite(tmp_path):
    path = write_json(tmp_path / "out" / "data.json", {"threshold": math.inf, "values": np.array([1.5, 2.0])})
    assert read_json(path) == {"threshold": "inf", "values": [1.5, 2.0]}
    assert path.read_text(encoding="utf-8").endswith("\n")


# ============================================================================
# Middleware
# ============================================================================


def request(name: str = "train") -> StageCallRequest:
    return StageCallRequest(stage_name=name, state={"seed": 1, "series": object()}, metadata={"seed": 1})


def test_error_handler_maps_exit_codes():
    handler = StageErrorHandlerMiddleware()

    def limited(_):
        raise ResourceLimitError("too many nodes")

    def broken(_):
        raise RuntimeError("boom")

    update = handler.wrap_stage_call(request("build_tree"), limited)
    assert update == {"error": "build_tree: too many nodes", "exit_code": 3, "failed_stage": "build_tree"}
    assert handler.wrap_stage_call(request(), broken)["exit_code"] == 1
    assert handler.wrap_stage_call(request(), lambda _: {"ok": True}) == {"ok": True}


def test_error_handler_hides_details():
    handler = StageErrorHandlerMiddleware(include_error_details=False)

    def failing(_):
        raise ConfigError("secret")

    assert "secret" not in handler.wrap_stage_call(request(), failing)["error"]


def test_first_middleware_is_outermost():
    calls = []

    class Recorder(StageMiddleware):
        def __init__(self, name):
            self.name = name

        def wrap_stage_call(self, req, handler):
            calls.append(f"{self.name}:before")
            result = handler(req)
            calls.append(f"{self.name}:after")
            return result

    wrapped = chain_middlewares([Recorder("outer"), Recorder("inner")], lambda _: {})
    wrapped(request())
    assert calls == ["outer:before", "inner:before", "inner:after", "outer:after"]


class FakeSpan:
    def __init__(self):
        self.updates = []

    def update(self, **kwargs):
        self.updates.append(kwargs)


class FakeLangfuse:
    def __init__(self):
        self.spans = []

    @contextmanager
    def start_as_current_observation(self, **kwargs):
        span = FakeSpan()
        self.spans.append((kwargs, span))
        yield span


def test_langfuse_middleware_records_span():
    client = FakeLangfuse()
    middleware = LangfuseStageLoggingMiddleware(langfuse_client=client, verbose=False)
    result = middleware.wrap_stage_call(request(), lambda _: {"completed_stages": ["train"]})
    assert result == {"completed_stages": ["train"]}
    kwargs, span = client.spans[0]
    assert kwargs["name"] == "stage:train"
    assert kwargs["input"] == {"seed": 1, "series": "object"}
    assert span.updates == [{"output": {"completed_stages": ["train"]}}]


def test_langfuse_middleware_reraises_errors():
    client = FakeLangfuse()
    middleware = LangfuseStageLoggingMiddleware(langfuse_client=client, verbose=False)

    def failing(_):
        raise ConfigError("bad")

    with pytest.raises(ConfigError):
        middleware.wrap_stage_call(request(), failing)
    _, span = client.spans[0]
    assert span.updates[-1]["level"] == "ERROR"


# ============================================================================
# CLI
# ============================================================================


def test_flag_overrides_only_include_given_flags():
    args = parse_args(["--seed", "3", "price", "--method", "all", "--strike", "610", "--rate", "0.04"])
    assert flag_overrides(args) == {"seed": 3, "option": {"strike": 610.0}, "calibration": {"r": 0.04}}


def test_global_flags_after_subcommand():
    args = parse_args(["synth", "--bars", "500", "--seed", "9", "--no-verbose"])
    assert flag_overrides(args) == {"seed": 9, "verbose": False, "generator": {"n_bars": 500}}


def test_cli_black_scholes_price(tmp_path, capsys):
    code = main(
        [
            "--output-dir", str(tmp_path), "--no-verbose",
            "price", "--method", "bs",
            "--spot", "600", "--strike", "600", "--days", "30", "--rate", "0.05", "--vol", "0.243",
        ]
    )
    assert code == 0
    report = json.loads((tmp_path / "pricing_report.json").read_text(encoding="utf-8"))
    assert report["results"][0]["method"] == "black_scholes"
    assert report["results"][0]["price"] == pytest.approx(17.90, abs=0.01)
    assert report["comparison"] is None
    line = capsys.readouterr().out.strip()
    assert line.startswith("black_scholes: ")
    assert float(line.split(": ")[1]) == pytest.approx(17.90, abs=0.01)


def test_cli_rejects_short_synthetic_series(tmp_path):
    assert main(["--output-dir", str(tmp_path), "--no-verbose", "synth", "--bars", "50"]) == 2


def test_cli_report_without_artifacts(tmp_path):
    assert main(["--output-dir", str(tmp_path), "--no-verbose", "report"]) == 2


def test_cli_bad_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "missing.yaml"), "--no-verbose", "features"]) == 2


def test_cli_ingest_invalid_csv(tmp_path):
    source = tmp_path / "bad.csv"
    source.write_text(
        "timestamp,open,high,low,close,volume,num_ticks\n2025-01-02T14:30:00,600,599,601,600,10,1\n",
        encoding="utf-8",
    )
    assert main(["--output-dir", str(tmp_path / "out"), "--no-verbose", "ingest", "--input", str(source)]) == 2


RUN_ARGS = [
    "run", "--bars", "3000", "--trees", "5", "--max-depth", "4", "--folds", "2",
    "--n-bins", "10", "--steps", "5", "--paths", "1000", "--crr-steps", "100",
]


@pytest.mark.slow
def test_cli_end_to_end_run_is_reproducible(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["--output-dir", str(first), "--no-verbose", "--seed", "3", *RUN_ARGS]) == 0
    assert main(["--output-dir", str(second), "--no-verbose", "--seed", "3", *RUN_ARGS]) == 0

    for name in ("bars.csv", "summary.json", "features.csv", "model.json", "eval_report.json",
                 "state_table.json", "tree.json", "pricing_report.json"):
        assert (first / name).exists(), name
    for name in ("bars.csv", "features.csv", "model.json", "state_table.json", "tree.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    report = json.loads((first / "pricing_report.json").read_text(encoding="utf-8"))
    methods = [r["method"] for r in report["results"]]
    assert methods == ["tree", "black_scholes", "crr", "mc"]
    assert report["comparison"]["benchmark_method"] == "black_scholes"
    assert len(list((first / "report").glob("*.csv"))) == 10

    out = capsys.readouterr().out
    assert "tree vs black_scholes" in out
