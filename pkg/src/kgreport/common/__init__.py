"""Common模块初始化"""

from .config import Config, PipelineConfig, default_budgets, get_config, init_config, parse_budgets
from .logger import setup_logger, setup_logger_from_config

__all__ = [
    "Config",
    "PipelineConfig",
    "default_budgets",
    "parse_budgets",
    "get_config",
    "init_config",
    "setup_logger",
    "setup_logger_from_config",
]
