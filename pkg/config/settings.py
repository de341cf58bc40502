import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment overrides. Only the output directory and thread budget are read."""

    output_dir: str = Field(default="./runs", description="Root for run outputs")
    thread_budget: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        description="Workers for generation and training",
    )

    model_config = SettingsConfigDict(
        env_prefix="GRIDPRICE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
