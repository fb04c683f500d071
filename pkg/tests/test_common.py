"""测试日志初始化与表格打印"""

import pandas as pd
from loguru import logger

from src.kgreport.common.config import Config
from src.kgreport.common.logger import LOG_LEVEL_ENV, setup_logger, setup_logger_from_config
from src.kgreport.common.print_table import display_width, format_frame


def test_display_width():
    assert display_width("abc") == 3
    assert display_width("消融") == 4


def test_format_frame_alignment():
    df = pd.DataFrame([{"Setting": "BASE", "RG": "-", "F1": 0.25}, {"Setting": "(d)", "RG": "✓", "F1": 0.5}])
    lines = format_frame(df)
    assert lines[0].split() == ["Setting", "RG", "F1"]
    assert set(lines[1]) == {"-"}
    assert lines[2].startswith("BASE ")
    assert lines[2].endswith("0.2500")
    assert lines[3].endswith("0.5000")
    assert len({display_width(line) for line in lines}) == 1


def test_format_frame_wide_characters():
    lines = format_frame(pd.DataFrame({"名称": ["图谱", "x"], "n": [1, 20]}), float_digits=2)
    assert len({display_width(line) for line in lines}) == 1


def test_logger_from_config(tmp_path, monkeypatch):
    log_file = tmp_path / "logs" / "m3kg.log"
    config = Config()
    config.set("logging.file", str(log_file))
    monkeypatch.setenv(LOG_LEVEL_ENV, "WARNING")
    try:
        setup_logger_from_config(config)
        logger.info("hidden message")
        logger.warning("visible message")
        logger.remove()
        text = log_file.read_text(encoding="utf-8")
    finally:
        setup_logger()
    assert "visible message" in text
    assert "hidden message" not in text
