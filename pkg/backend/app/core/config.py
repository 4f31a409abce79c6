from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="UVE_", extra="ignore")

    app_name: str = "UVE Desk - Underwater Video Enhancement"
    api_v1_prefix: str = "/api/v1"

    # Worker parallelism for synthesis, data prefetch and sliding-window inference
    threads: int = Field(default=1, ge=1)

    data_dir: Path = Path("data")
    runs_dir: Path = Path("runs")

    log_level: str = "INFO"

    # Results kept per registry by the in-process store; oldest entries are evicted
    store_limit: int = Field(default=64, ge=1)

    # MLOps / tracking
    mlflow_tracking_uri: str | None = None


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
