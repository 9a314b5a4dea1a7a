"""
Runtime settings for INVSEG.

Values come from INVSEG_* environment variables or a local .env file:

    INVSEG_LOG_LEVEL=DEBUG
    INVSEG_LOG_JSON=true
    INVSEG_NUM_THREADS=4
"""
from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    """Process-wide settings (not part of an experiment's config)."""

    log_level: str = Field("INFO", description="Root log level")
    log_json: bool = Field(False, description="Emit JSON log lines")
    num_threads: int = Field(1, ge=1, description="Worker threads for evaluation")
    data_dir: Path = Field(Path("./data"), description="Default dataset root")
    output_dir: Path = Field(Path("./runs"), description="Default output root")
    show_progress: bool = Field(True, description="Show tqdm progress bars")

    model_config = SettingsConfigDict(
        env_prefix="INVSEG_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {value}")
        return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
