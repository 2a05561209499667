"""Run defaults loading and saving for ehdn"""

import os
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from ehdn.models.config import RunConfig


# Defaults live in ehdn.yaml in the current working directory
CONFIG_FILE = Path("ehdn.yaml")
TIME_LIMIT_ENV = "EHDN_TIME_LIMIT"


class ConfigNotFoundError(Exception):
    """Raised when config file doesn't exist"""

    pass


class ConfigInvalidError(Exception):
    """Raised when config file is invalid"""

    pass


def config_exists(path: Optional[Path] = None) -> bool:
    return (path or CONFIG_FILE).exists()


def load_config(path: Optional[Path] = None) -> RunConfig:
    """Load run defaults from ehdn.yaml

    Raises:
        ConfigNotFoundError: If config file doesn't exist
        ConfigInvalidError: If config file is invalid
    """
    path = path or CONFIG_FILE
    if not path.exists():
        raise ConfigNotFoundError(f"Config file not found at {path}")

    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)

        if data is None:
            raise ConfigInvalidError(f"Config file is empty: {path}")
        if not isinstance(data, dict):
            raise ConfigInvalidError(f"Config file must hold a mapping: {path}")

        return RunConfig.model_validate(data)

    except yaml.YAMLError as e:
        raise ConfigInvalidError(f"Invalid YAML in config file: {e}")
    except ValidationError as e:
        field = ".".join(str(p) for p in e.errors()[0]["loc"])
        raise ConfigInvalidError(f"Invalid config field '{field}': {e.errors()[0]['msg']}")


def save_config(config: RunConfig, path: Optional[Path] = None) -> Path:
    """Save run settings as YAML"""
    path = path or CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.dump(config.model_dump(mode="json"), f, default_flow_style=False, sort_keys=False)
    return path


def merge_config(base: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Apply the options given on the command line (None means not given)

    Raises:
        ConfigInvalidError: If the merged settings fail validation
    """
    data = base.model_dump()
    solver = dict(data.pop("solver"))
    for key, value in overrides.items():
        if value is None:
            continue
        if key in solver:
            solver[key] = value
        else:
            data[key] = value
    data["solver"] = solver
    env = os.environ.get(TIME_LIMIT_ENV)
    if env:
        try:
            data["solver"]["time_limit"] = float(env)
        except ValueError:
            raise ConfigInvalidError(f"{TIME_LIMIT_ENV} must be a number of seconds, got '{env}'")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        field = ".".join(str(p) for p in e.errors()[0]["loc"])
        raise ConfigInvalidError(f"Invalid option '{field}': {e.errors()[0]['msg']}")
