"""Configuration loader with environment variable support."""
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from models.errors import ConfigError
from models.schemas import Alpha3Form, CollapseOrder, Scale, VarianceMode

APP_VERSION = "0.1.0"


class Settings(BaseSettings):
    """Process-level settings read from MECAL_* environment variables or .env."""

    model_config = SettingsConfigDict(env_prefix="MECAL_", env_file=".env", env_file_encoding="utf-8", extra="ignore")

    log_level: str = "INFO"
    log_dir: Optional[str] = None
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)


class RunDefaults(BaseModel):
    """Every default a subcommand materializes into its manifest."""

    range_lo: float = -6.0
    range_hi: float = 4.0
    scale: Scale = Scale.LOG2
    collapse: CollapseOrder = CollapseOrder.LOG_THEN_MEAN
    fdr: float = Field(default=0.01, gt=0, lt=1)
    arm: Literal["calibrated", "rnaseq", "both"] = "both"
    var_mode: VarianceMode = VarianceMode.LEADING
    bootstrap_reps: int = Field(default=500, ge=100)
    replications: int = Field(default=200, ge=1)
    n_train_grid: List[int] = Field(default_factory=lambda: [20, 50, 100, 300])
    n_test: int = Field(default=1000, ge=1)
    setting: Literal[1, 2, 3] = 1
    alpha3_form: Alpha3Form = Alpha3Form.BETA3
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _range(self) -> "RunDefaults":
        if not self.range_lo < self.range_hi:
            raise ValueError("range_lo must be below range_hi")
        return self

    @field_validator("n_train_grid")
    @classmethod
    def _grid(cls, v: List[int]) -> List[int]:
        if not v or any(n < 4 for n in v):
            raise ValueError("n_train_grid values must be >= 4")
        return v

    @property
    def expression_range(self) -> Tuple[float, float]:
        return self.range_lo, self.range_hi


def _expand_env_vars(value: Any) -> Any:
    """Recursively expand ${VAR} references in config values."""
    if isinstance(value, str):
        pattern = r'\$\{([^}]+)\}'
        for var_name in re.findall(pattern, value):
            value = value.replace(f'${{{var_name}}}', os.getenv(var_name, ''))
        return value
    elif isinstance(value, dict):
        return {k: _expand_env_vars(v) for k, v in value.items()}
    elif isinstance(value, list):
        return [_expand_env_vars(item) for item in value]
    return value


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load configuration from YAML file with environment variable expansion.

    Args:
        config_path: Path to a YAML file; None yields an empty config

    Returns:
        Configuration dictionary with ``run``, ``logging`` and ``simulation`` sections
    """
    config: Dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        with open(path, 'r') as f:
            try:
                config = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"invalid YAML: {e}")
        if not isinstance(config, dict):
            raise ConfigError("top level must be a mapping")

    config = _expand_env_vars(config)

    if log_level := os.getenv("LOG_LEVEL"):
        config.setdefault("logging", {})["level"] = log_level

    return config


def _field_path(error: Dict[str, Any], prefix: str) -> str:
    return ".".join([prefix, *(str(p) for p in error.get("loc", ()))]).strip(".")


def validation_to_config_error(e: ValidationError, prefix: str = "") -> ConfigError:
    """First pydantic error as a ConfigError carrying its dotted field path."""
    first = e.errors()[0]
    return ConfigError(first.get("msg", "invalid value"), _field_path(first, prefix))


def load_settings() -> Settings:
    """Settings from the environment; schema errors become a ConfigError under ``env``."""
    try:
        return Settings()
    except ValidationError as e:
        raise validation_to_config_error(e, "env")


def resolve_defaults(config: Dict[str, Any], settings: Optional[Settings] = None) -> RunDefaults:
    """Layer environment settings and the YAML ``run`` section over built-in defaults."""
    settings = settings or load_settings()
    merged: Dict[str, Any] = {"threads": settings.threads, "seed": settings.seed}
    run_section = config.get("run", {}) or {}
    if not isinstance(run_section, dict):
        raise ConfigError("must be a mapping", "run")
    merged.update(run_section)
    try:
        return RunDefaults(**merged)
    except ValidationError as e:
        raise validation_to_config_error(e, "run")
