"""
Runtime settings for the segmentation engine.
Values come from dust.config.json, then DUST_* environment variables (a .env file is honoured).
"""
import json
import logging
import os
from functools import lru_cache
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from errors import ConfigError

logger = logging.getLogger("Dust.Config")

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "dust.config.json")


class _Section(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)


class SegmenterSettings(_Section):
    q0: float = 0.0
    prune_slack: float = Field(1e-10, alias="pruneSlack", ge=0)
    compensated_sum: bool = Field(False, alias="compensatedSum")
    compact_dead_fraction: float = Field(0.5, alias="compactDeadFraction", gt=0, le=1)
    standardise: bool = False


class DualSettings(_Section):
    strategy: str = "exact1d"
    constraints: int = Field(1, ge=1, le=2)
    qn_max_iters: int = Field(20, alias="qnMaxIters", gt=0)
    qn_tol: float = Field(1e-8, alias="qnTol", gt=0)
    random_factor: float = Field(0.999, alias="randomFactor", gt=0, lt=1)
    random_r: bool = Field(False, alias="randomR")


class SimulationSettings(_Section):
    trials: int = Field(10, gt=0)
    bisection_iterations: int = Field(200, alias="bisectionIterations", gt=0)


class BenchSettings(_Section):
    jobs: int = Field(1, gt=0)
    quantiles: List[float] = [0.025, 0.5, 0.975]
    report_version: int = Field(1, alias="reportVersion")

    @field_validator("quantiles")
    @classmethod
    def quantiles_in_unit_interval(cls, v):
        if not v or any(q < 0 or q > 1 for q in v):
            raise ValueError("quantiles must lie in [0, 1]")
        return v


class LoggingSettings(_Section):
    level: str = "info"
    max_memory_logs: int = Field(1000, alias="maxMemoryLogs", gt=0)
    enable_console: bool = Field(True, alias="enableConsole")
    enable_file: bool = Field(False, alias="enableFile")
    log_dir: str = Field("logs", alias="logDir")


class DustSettings(_Section):
    segmenter: SegmenterSettings = SegmenterSettings()
    dual: DualSettings = DualSettings()
    simulation: SimulationSettings = SimulationSettings()
    bench: BenchSettings = BenchSettings()
    logging: LoggingSettings = LoggingSettings()


def _env_overrides(raw: dict) -> dict:
    """Apply DUST_* environment variables on top of the file content"""
    if os.getenv("DUST_LOG_LEVEL"):
        raw.setdefault("logging", {})["level"] = os.getenv("DUST_LOG_LEVEL")
    if os.getenv("DUST_JOBS"):
        raw.setdefault("bench", {})["jobs"] = os.getenv("DUST_JOBS")
    if os.getenv("DUST_COMPENSATED_SUM"):
        flag = os.getenv("DUST_COMPENSATED_SUM", "").strip().lower() in ("1", "true", "yes", "on")
        raw.setdefault("segmenter", {})["compensatedSum"] = flag
    return raw


def load_settings(path: Optional[str] = None) -> DustSettings:
    """Load settings from a JSON file (default: DUST_CONFIG or dust.config.json)"""
    load_dotenv()
    path = path or os.getenv("DUST_CONFIG", DEFAULT_CONFIG_PATH)

    raw: dict = {}
    if os.path.exists(path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from e
    else:
        logger.warning(f"⚠️ Config file not found, using defaults: {path}")

    try:
        return DustSettings.model_validate(_env_overrides(raw))
    except ValidationError as e:
        raise ConfigError(f"invalid settings in {path}: {e}") from e


@lru_cache(maxsize=1)
def get_settings() -> DustSettings:
    return load_settings()
