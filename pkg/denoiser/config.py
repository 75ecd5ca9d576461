"""Environment configuration for the particle denoiser."""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables (prefix ``PD_``).

    Numerical run parameters (noise level, bandwidth, depth) are not settings;
    they travel with each run in ``DenoiseConfig`` or ``ExperimentSpec``.
    """

    model_config = SettingsConfigDict(
        env_prefix="PD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application settings
    app_name: str = "Particle Denoiser"
    app_version: str = "0.1.0"
    debug: bool = False
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # Parallelism settings
    workers: int = Field(default=1, ge=1)
    kernel_block_size: int = Field(default=256, ge=1)

    # Monte Carlo settings
    mmse_samples: int = Field(default=1_000_000, ge=1000)
    mc_chunk_size: int = Field(default=100_000, ge=1)
    sliced_projections: int = Field(default=256, ge=1)
    exact_matching_max: int = Field(default=512, ge=1)

    # Output settings
    print_precision: int = Field(default=6, ge=0, le=17)


@lru_cache
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()
