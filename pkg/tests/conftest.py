"""Pytest配置文件"""

import sys
from pathlib import Path

# 添加src目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def mini_kg_path():
    """小型 m3kg 文件（5 实体 / 4 三元组 / 2 视觉 token）"""
    return str(FIXTURES / "m3kg_mini.jsonl")


@pytest.fixture
def mini_kg(mini_kg_path):
    """已加载的小型知识图谱"""
    from src.kgreport.kg.storage import load

    return load(mini_kg_path)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def synth_dir():
    """小规模合成语料（8 对，grid 16，patch 4）"""
    import tempfile

    from src.kgreport.pipeline.synth import synth_corpus

    with tempfile.TemporaryDirectory() as tmpdir:
        result = synth_corpus(tmpdir, seed=7, n_pairs=8, grid=16, n_diseases=6, patch=4, p_present=0.5)
        yield tmpdir, result
