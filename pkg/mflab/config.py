"""
Application configuration using Pydantic Settings.
Loads MF_-prefixed environment variables, optionally from a .env file.
"""

from typing import Literal, Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables."""

    # Logging
    environment: Literal["development", "ci", "production"] = Field(
        default="development",
        description="Colours in log output only in development"
    )
    log_level: str = Field(
        default="INFO",
        description="Root log level; the CLI flag --log-level takes precedence"
    )

    # Reproducibility
    seed: Optional[int] = Field(
        default=None,
        description="When set, replaces an experiment's seed list with this single seed"
    )

    # Execution
    workers: int = Field(
        default=1,
        ge=1,
        description="Default worker count for stage, subtree and group parallelism"
    )

    # Paths
    data_dir: str = Field(
        default="data",
        description="Directory holding rating and multi-label datasets"
    )
    reports_dir: str = Field(
        default="reports",
        description="Directory where run reports are written by default"
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="MF_",
        case_sensitive=False,
        extra="ignore"
    )


# Global settings instance
settings = Settings()
