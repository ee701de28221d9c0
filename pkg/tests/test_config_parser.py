import math

import orjson
import pytest

from src.analysis.errors import ConfigError
from src.cli.config_parser import (
    THREADS_ENV_VAR,
    RunConfig,
    apply_overrides,
    load_config,
    parse_override,
    resolve_threads,
    save_config,
)


def test_defaults():
    config = RunConfig()
    assert config.process.alpha == 0.5
    assert config.wavelet.vanishing_moments == 2
    assert config.analysis.p == 2.0
    assert config.output.directory == "out"


def test_round_trip(tmp_path):
    config = RunConfig().set_field("analysis.p", "inf").set_field("analysis.scale_range", [0.01, 0.25])
    path = save_config(config, tmp_path / "config.json")
    data = orjson.loads(path.read_bytes())
    assert data["analysis"]["p"] == "inf"
    assert data["format_version"] == 1
    loaded = load_config(path)
    assert loaded == config
    assert math.isinf(loaded.analysis.p)
    assert loaded.analysis.scale_range == (0.01, 0.25)


def test_partial_config_takes_defaults():
    config = RunConfig.from_dict({"process": {"alpha": -0.7, "eta": 0.5}})
    assert config.process.alpha == -0.7
    assert config.process.j_max == 16
    assert config.spectrum.bin_width == 0.05


@pytest.mark.parametrize(
    "data,match",
    [
        ([], "JSON object"),
        ({"plotting": {}}, "unknown config sections"),
        ({"process": {"alpah": 0.3}}, "unknown fields in 'process'"),
        ({"process": 3}, "must be an object"),
        ({"format_version": 2}, "format_version 2"),
        ({"analysis": {"p": "two"}}, "invalid 'analysis' section"),
    ],
)
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(broken)


def test_config_hash_ignores_the_output_section():
    base = RunConfig()
    assert base.config_hash() == RunConfig().config_hash()
    assert len(base.config_hash()) == 64
    moved = base.set_field("output.directory", "elsewhere").set_field("output.threads", 4)
    assert moved.config_hash() == base.config_hash()
    assert base.set_field("process.seed", 1).config_hash() != base.config_hash()


def test_parse_override():
    assert parse_override("process.alpha=0.3") == ("process.alpha", 0.3)
    assert parse_override("process.pulse=hat") == ("process.pulse", "hat")
    assert parse_override("verify.criteria=[\"A1\",\"A2\"]") == ("verify.criteria", ["A1", "A2"])
    with pytest.raises(ConfigError, match="section.field=value"):
        parse_override("process.alpha")


def test_apply_overrides():
    config = apply_overrides(
        RunConfig(),
        {"seed": 7, "out": "results", "threads": None},
        ["process.j_max=10", "spectrum.theory=false"],
    )
    assert config.process.seed == 7
    assert config.output.directory == "results"
    assert config.output.threads is None
    assert config.process.j_max == 10
    assert config.spectrum.theory is False


@pytest.mark.parametrize(
    "override,match",
    [("nope.alpha=1", "unknown config section"), ("process.beta=1", "unknown field 'beta'"), ("process=1", "section.field")],
)
def test_bad_overrides(override, match):
    with pytest.raises(ConfigError, match=match):
        apply_overrides(RunConfig(), {}, [override])


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert resolve_threads(RunConfig()) == 1
    monkeypatch.setenv(THREADS_ENV_VAR, "3")
    assert resolve_threads(RunConfig()) == 3
    assert resolve_threads(RunConfig().set_field("output.threads", 2)) == 2
    monkeypatch.setenv(THREADS_ENV_VAR, "many")
    with pytest.raises(ConfigError, match="must be an integer"):
        resolve_threads(RunConfig())
    with pytest.raises(ConfigError, match=">= 1"):
        resolve_threads(RunConfig().set_field("output.threads", 0))
