"""
Configuration - hyperparameter profiles and logging settings from config.yml,
thread count from the environment.
"""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from .booster import Hyperparameters
from .constants import THREADS_ENV_VAR
from .model import InvalidArgumentError

logger = logging.getLogger(__name__)

CONFIG_PATH = Path(__file__).with_name("config.yml")
DEFAULT_PROFILE = "base"

# Pick up SMOOTHBOOST_THREADS from a .env file if present
load_dotenv()


@lru_cache(maxsize=None)
def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    config_path = Path(path) if path else CONFIG_PATH
    with open(config_path, encoding="utf-8") as f:
        config = yaml.safe_load(f) or {}
    if not isinstance(config.get("profiles"), dict) or not config["profiles"]:
        raise InvalidArgumentError(f"{config_path}: no hyperparameter profiles defined")
    return config


def profile_names() -> List[str]:
    return list(load_config()["profiles"])


def get_profile(name: str = DEFAULT_PROFILE, **overrides) -> Hyperparameters:
    """Hyperparameters of a named profile, with optional field overrides (None values ignored)."""
    profiles = load_config()["profiles"]
    if name not in profiles:
        raise InvalidArgumentError(
            f"unknown profile {name!r}; valid profiles: {', '.join(profiles)}"
        )
    settings = dict(profiles[name])
    settings.update({key: value for key, value in overrides.items() if value is not None})
    if isinstance(settings.get("gamma_range"), list):
        settings["gamma_range"] = tuple(settings["gamma_range"])
    # ValidationError carries the range message of every failed field
    return Hyperparameters.model_validate(settings)


def logging_settings() -> Dict[str, Any]:
    settings = {"format": "%(levelname)s - %(message)s", "level": "INFO", "progress_every": 100}
    settings.update(load_config().get("logging") or {})
    return settings


def progress_every() -> int:
    return int(logging_settings()["progress_every"])


def default_threads() -> int:
    """SMOOTHBOOST_THREADS if set, else every core (joblib's -1)."""
    value = os.getenv(THREADS_ENV_VAR)
    if not value:
        return -1
    try:
        threads = int(value)
    except ValueError:
        raise InvalidArgumentError(f"{THREADS_ENV_VAR} must be an integer, got {value!r}") from None
    if threads == 0:
        raise InvalidArgumentError(f"{THREADS_ENV_VAR} must be nonzero")
    return threads
