"""Core functionality for ehdn"""

from ehdn.core.config import config_exists, load_config, merge_config, save_config
from ehdn.core.instance import parse_instance, resolve_instance, save_instance, validate_network
from ehdn.core.report import build_report, load_plan

__all__ = [
    "build_report",
    "config_exists",
    "load_config",
    "load_plan",
    "merge_config",
    "parse_instance",
    "resolve_instance",
    "save_config",
    "save_instance",
    "validate_network",
]
