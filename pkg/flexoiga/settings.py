"""
Process settings loaded from the environment (.env supported).
"""

import logging
import os
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .errors import ConfigError

# Load environment variables
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    output_dir: str = "./results"
    log_level: str = "INFO"
    vtk_sampling: int = 8
    host: str = "0.0.0.0"
    port: int = 8000
    max_workers: int = 1

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"unknown log level {value!r}")
        return value

    @field_validator("vtk_sampling", "max_workers")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Build settings from FLEXOIGA_* environment variables."""
    raw = {
        "output_dir": os.getenv("FLEXOIGA_OUTPUT_DIR", "./results"),
        "log_level": os.getenv("FLEXOIGA_LOG_LEVEL", "INFO"),
        "vtk_sampling": os.getenv("FLEXOIGA_VTK_SAMPLING", "8"),
        "host": os.getenv("FLEXOIGA_HOST", "0.0.0.0"),
        "port": os.getenv("FLEXOIGA_PORT", "8000"),
        "max_workers": os.getenv("FLEXOIGA_MAX_WORKERS", "1"),
    }
    try:
        return Settings(**raw)
    except ValidationError as e:
        raise ConfigError(
            "Invalid environment settings",
            [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()],
        ) from e


def configure_logging(level: str = None) -> None:
    """Configure root logging the same way for the CLI and the service."""
    logging.basicConfig(
        level=level or get_settings().log_level,
        format=LOG_FORMAT
    )
