"""日志工具模块

控制台输出经由 tqdm.write，训练进度条不会被日志行打断。
环境变量 KGREPORT_LOG_LEVEL（可写在 .env）优先于配置文件中的 logging.level。
"""

import os
from pathlib import Path
from typing import Optional

from loguru import logger
from tqdm import tqdm

LOG_LEVEL_ENV = "KGREPORT_LOG_LEVEL"

DEFAULT_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | "
    "<level>{level: <7}</level> | "
    "<level>{message}</level>"
)


def _tqdm_sink(message) -> None:
    tqdm.write(str(message), end="")


def setup_logger(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    rotation: str = "100 MB",
    retention: str = "30 days",
    format_string: Optional[str] = None
) -> None:
    """配置日志

    Args:
        log_level: 日志级别
        log_file: 滚动日志文件路径，None 则只输出到控制台
        rotation: 日志轮转大小
        retention: 日志保留时间
        format_string: 日志格式字符串
    """
    logger.remove()
    fmt = format_string or DEFAULT_FORMAT
    logger.add(_tqdm_sink, format=fmt, level=log_level, colorize=True)

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(log_file, format=fmt, level=log_level, rotation=rotation,
                   retention=retention, encoding="utf-8", colorize=False)

    logger.debug(f"日志级别: {log_level}" + (f", 文件: {log_file}" if log_file else ""))


def setup_logger_from_config(config) -> None:
    """按 Config 的 logging 段初始化日志

    Args:
        config: Config 实例（logging.level / file / rotation / retention）
    """
    setup_logger(
        log_level=os.getenv(LOG_LEVEL_ENV) or config.get("logging.level", "INFO"),
        log_file=config.get("logging.file"),
        rotation=config.get("logging.rotation", "100 MB"),
        retention=config.get("logging.retention", "30 days"),
    )
