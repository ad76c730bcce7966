"""
Runtime settings.

Values are layered: defaults < environment (after ``load_dotenv``) < an
explicit dotenv config file < command-line overrides.
"""

import os
from typing import Any, Dict, Literal, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from hitrev.errors import ConfigError

load_dotenv()

ENV_PREFIX = "HITREV_"


class Settings(BaseModel):
    """Effective configuration echoed into every report."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    cap: int = Field(default=10**8, ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    c_thr: float = Field(default=10.0, gt=0.0)
    workers: int = Field(default=1, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    format: Literal["csv", "json"] = "json"
    model: Optional[str] = None


def _from_mapping(values: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Pick ``HITREV_*`` keys out of an env-like mapping."""
    picked = {}
    for name in Settings.model_fields:
        raw = values.get(ENV_PREFIX + name.upper())
        if raw is not None and raw != "":
            picked[name] = raw.upper() if name == "log_level" else raw
    return picked


def load_settings(config_file: Optional[str] = None, **overrides: Any) -> Settings:
    """
    Build the effective settings.

    Args:
        config_file: Optional dotenv-format file whose values beat the environment
        **overrides: Command-line values; ``None`` means "not given"

    Returns:
        Frozen Settings instance
    """
    values = _from_mapping(dict(os.environ))

    if config_file:
        if not os.path.exists(config_file):
            raise ConfigError(f"Config file not found: {config_file}")
        values.update(_from_mapping(dotenv_values(config_file)))

    values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return Settings(**values)
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from None
