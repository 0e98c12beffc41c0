"""
Application settings for DepthFormer.

Values come from environment variables, optionally loaded from a `.env` file
at the project root.
"""
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field

PROJECT_ROOT = Path(__file__).resolve().parent.parent

load_dotenv(PROJECT_ROOT / ".env")


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


class Settings(BaseModel):
    """Process-wide settings."""
    APP_ENV: str = Field("development", description="Deployment environment name")
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = str(PROJECT_ROOT / "logs")
    LOG_TO_FILE: bool = True

    # Artifacts
    RUNS_DIR: str = str(PROJECT_ROOT / "runs")
    TEMPLATES_DIR: str = str(PROJECT_ROOT / "templates")

    # Numerics
    DEFAULT_SEED: int = 0
    LAYER_NORM_EPS: float = Field(1e-5, gt=0)
    GRADCHECK_STEP: float = Field(1e-6, gt=0)
    GRADCHECK_TOLERANCE: float = Field(1e-5, gt=0)
    GRADCHECK_ABS_FLOOR: float = Field(1e-8, gt=0)


def load_settings() -> Settings:
    """
    Build settings from the current environment.

    Returns:
        Settings: Populated settings instance
    """
    values = {}
    for name, field in Settings.model_fields.items():
        raw = os.getenv(name)
        if raw is None:
            continue
        if field.annotation is bool:
            values[name] = _env_bool(name, field.default)
        else:
            values[name] = raw
    return Settings(**values)


settings = load_settings()
