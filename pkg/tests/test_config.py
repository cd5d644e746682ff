"""Tests for YAML loading, environment settings and default resolution."""
from pathlib import Path

import pytest

from config import RunDefaults, Settings, load_config, load_settings, resolve_defaults
from models.errors import ConfigError
from models.schemas import VarianceMode

SAMPLE = Path(__file__).resolve().parent.parent / "config.sample.yaml"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("LOG_LEVEL", "MECAL_SEED", "MECAL_THREADS", "MECAL_LOG_LEVEL", "MECAL_LOG_DIR"):
        monkeypatch.delenv(name, raising=False)


def test_no_file_gives_empty_config():
    assert load_config(None) == {}


def test_sample_config_resolves():
    config = load_config(str(SAMPLE))
    defaults = resolve_defaults(config, Settings())
    assert defaults == RunDefaults()
    assert config["logging"]["dir"] == ""


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found") as exc:
        load_config(str(tmp_path / "absent.yaml"))
    assert exc.value.exit_code == 11


def test_invalid_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("run: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(str(path))


def test_environment_expansion(tmp_path, monkeypatch):
    monkeypatch.setenv("MECAL_TEST_DIR", "/tmp/mecal-logs")
    path = tmp_path / "c.yaml"
    path.write_text("logging:\n  dir: ${MECAL_TEST_DIR}/run\n")
    assert load_config(str(path))["logging"]["dir"] == "/tmp/mecal-logs/run"


def test_log_level_environment_override(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    assert load_config(None)["logging"]["level"] == "DEBUG"


def test_precedence_env_then_file(monkeypatch):
    monkeypatch.setenv("MECAL_SEED", "7")
    monkeypatch.setenv("MECAL_THREADS", "3")
    assert resolve_defaults({}, Settings()).seed == 7
    defaults = resolve_defaults({"run": {"seed": 11, "var_mode": "bootstrap"}}, Settings())
    assert defaults.seed == 11
    assert defaults.threads == 3
    assert defaults.var_mode == VarianceMode.BOOTSTRAP


@pytest.mark.parametrize(
    "run, field",
    [
        ({"fdr": 1.5}, "run.fdr"),
        ({"bootstrap_reps": 10}, "run.bootstrap_reps"),
        ({"setting": 4}, "run.setting"),
        ({"n_train_grid": [2, 50]}, "run.n_train_grid"),
    ],
)
def test_invalid_run_values_name_the_field(run, field):
    with pytest.raises(ConfigError) as exc:
        resolve_defaults({"run": run}, Settings())
    assert exc.value.field_path == field


def test_inverted_range():
    with pytest.raises(ConfigError):
        resolve_defaults({"run": {"range_lo": 5, "range_hi": 1}}, Settings())


def test_run_section_must_be_a_mapping():
    with pytest.raises(ConfigError, match="run"):
        resolve_defaults({"run": [1, 2]}, Settings())


def test_invalid_environment_value_names_the_variable(monkeypatch):
    monkeypatch.setenv("MECAL_THREADS", "0")
    with pytest.raises(ConfigError) as exc:
        load_settings()
    assert exc.value.field_path == "env.threads"
    assert exc.value.exit_code == 11
