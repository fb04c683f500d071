"""
KGReport - 知识图谱增强的胸片报告生成框架
多尺度知识图谱融合 + 疾病视觉记忆 + 轻量自回归解码器
"""

__version__ = "0.1.0"
__author__ = "deltree-y"

from pathlib import Path

# 项目根目录
PROJECT_ROOT = Path(__file__).parent.parent.parent

# 数据目录
DATA_ROOT = PROJECT_ROOT / "data"
DATA_CORPUS = DATA_ROOT / "corpus"
DATA_KG = DATA_ROOT / "kg"
DATA_CHECKPOINTS = DATA_ROOT / "checkpoints"
DATA_REPORTS = DATA_ROOT / "reports"

# 配置目录
CONFIG_ROOT = PROJECT_ROOT / "configs"
