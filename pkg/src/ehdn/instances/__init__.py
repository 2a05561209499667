"""Bundled network instances"""

from importlib import resources
from pathlib import Path

BUILTIN_INSTANCES = {
    "toy3": "Three-bus feeder, three-node hydrogen tree, one station, two periods",
    "ieee33-like": "33-bus feeder coupled to a 21-node hydrogen network, four periods",
}


def get_instance_path(name: str) -> Path:
    """Path of a bundled instance file

    Raises:
        KeyError: If no bundled instance has this name
    """
    if name not in BUILTIN_INSTANCES:
        raise KeyError(f"unknown instance '{name}'; bundled: {sorted(BUILTIN_INSTANCES)}")
    return Path(str(resources.files(__name__) / f"{name}.instance.yaml"))
