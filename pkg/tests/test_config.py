"""测试配置管理模块"""

import tempfile
from pathlib import Path

import pytest

from src.kgreport.common.config import Config, PipelineConfig, default_budgets, get_config, init_config, parse_budgets
from src.kgreport.common.errors import ConfigError

CONFIGS = Path(__file__).parent.parent / "configs"


def test_config_init():
    """测试配置初始化（默认读取 base.yaml）"""
    config = Config()
    assert config is not None
    assert config.get("logging.level") == "INFO"


def test_config_set_get():
    """测试配置设置和获取"""
    config = Config()

    config.set("test.key", "value")
    assert config.get("test.key") == "value"

    config.set("test.nested.key", 123)
    assert config.get("test.nested.key") == 123

    # 获取不存在的键
    assert config.get("not.exist", "default") == "default"


def test_config_merge_ablation():
    """测试合并消融配置"""
    config = Config(str(CONFIGS / "base.yaml"))
    config.merge_config(str(CONFIGS / "ablation.yaml"))
    assert config.get("ablation.encoder") == ["gcn", "rgcn", "gat"]
    assert config.get("ablation.visual")[-1] == 1000
    assert config.get("data.kg") == "./data/kg"


def test_config_get_env(monkeypatch):
    """测试环境变量获取"""
    config = Config()
    monkeypatch.setenv("TEST_VAR", "test_value")
    assert config.get_env("TEST_VAR") == "test_value"
    assert config.get_env("NOT_EXIST", "default") == "default"


def test_config_file_errors():
    """测试缺失与损坏的 YAML"""
    with pytest.raises(ConfigError):
        Config("/nonexistent/base.yaml")
    with tempfile.TemporaryDirectory() as tmpdir:
        bad = Path(tmpdir) / "bad.yaml"
        bad.write_text("logging: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            Config(str(bad))
        listing = Path(tmpdir) / "list.yaml"
        listing.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            Config().merge_config(str(listing))


def test_global_config():
    """测试进程级配置"""
    config = init_config(str(CONFIGS / "ablation.yaml"))
    assert get_config() is config
    assert config.get("ablation.encoder") == ["gcn", "rgcn", "gat"]
    assert config.get("logging.level") is None
    assert init_config().get("logging.level") == "INFO"


class TestPipelineConfig:
    """测试流水线配置"""

    def test_shipped_file_matches_defaults(self):
        assert PipelineConfig.from_file(str(CONFIGS / "pipeline.yaml")) == PipelineConfig()

    def test_defaults(self):
        config = PipelineConfig()
        assert config.scale_budgets == [60, 120, 180, 240, 300]
        assert config.final_budget == 300
        assert config.use_graph
        assert config.lr == pytest.approx(9e-5)

    def test_render_parse_round_trip(self):
        config = PipelineConfig(use_rgcn_variant="gat", scale_budgets=[2, 4], tau=0.25, decode_mode="beam", beam_k=3)
        assert PipelineConfig.parse(config.render()) == config

    def test_render_yaml_round_trip(self):
        config = PipelineConfig(use_multiscale=False, external_embedder_cmd="embed --dim 64")
        assert PipelineConfig.parse(config.render("yaml")) == config
        with pytest.raises(ConfigError):
            config.render("toml")

    def test_flat_text(self):
        text = "# run\nseed = 7\nencoder_unused_line = 1\n"
        with pytest.raises(ConfigError):
            PipelineConfig.parse(text)
        config = PipelineConfig.parse(
            "# run\n"
            "seed = 7\n"
            "use_rgcn_variant = gat   # 图注意力\n"
            "\n"
            "scale_budgets = 2,4,8\n"
            "lr = 1e-3\n"
            "use_dvg = false\n"
            "external_embedder_cmd = \"embed --dim 64\"\n"
        )
        assert config.seed == 7
        assert config.use_rgcn_variant == "gat"
        assert config.scale_budgets == [2, 4, 8]
        assert config.lr == pytest.approx(1e-3)
        assert config.use_dvg is False
        assert config.external_embedder_cmd == "embed --dim 64"

    def test_flat_text_errors(self):
        with pytest.raises(ConfigError):
            PipelineConfig.parse("seed = 1\nseed = 2\n")
        with pytest.raises(ConfigError):
            PipelineConfig.parse("seed = 1\nsteps: 2\n")
        with pytest.raises(ConfigError):
            PipelineConfig.parse("steps = many\n")

    @pytest.mark.parametrize("text, expected", [
        ("true", True), ("False", False), ("1", True), ("0", False), ("yes", True), ("off", False),
    ])
    def test_bool_strings_are_coerced(self, text, expected):
        assert PipelineConfig.parse(f"use_multiscale = {text}\n").use_multiscale is expected
        assert PipelineConfig.parse(f"use_multiscale: '{text}'\n").use_multiscale is expected

    def test_bad_bool_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig.parse("use_dvg = maybe\n")
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"residual": "enabled"})
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"steps": True})

    @pytest.mark.parametrize("name", ["pipeline.yaml", "pipeline.cfg"])
    def test_save_and_load(self, name):
        config = PipelineConfig(steps=3, use_multiscale=False)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "nested" / name
            config.save(str(path))
            assert PipelineConfig.from_file(str(path)) == config
            assert ("use_multiscale = false" in path.read_text(encoding="utf-8")) == (path.suffix == ".cfg")

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_file("/nonexistent/pipeline.yaml")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"learning_rate": 0.1})

    def test_float_strings_are_coerced(self):
        # PyYAML 1.1 规则下 9e-5 是字符串
        config = PipelineConfig.parse("lr: 9e-5\ntau: 1\n")
        assert config.lr == pytest.approx(9e-5)
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"lr": "fast"})

    def test_budgets_from_string(self):
        assert PipelineConfig.from_dict({"scale_budgets": "2, 4,8"}).scale_budgets == [2, 4, 8]
        assert parse_budgets("60,120") == [60, 120]
        with pytest.raises(ConfigError):
            parse_budgets("a,b")

    @pytest.mark.parametrize("changes", [
        {"heads": 3},
        {"d_dec": 30, "heads": 4},
        {"scale_budgets": [5, 5]},
        {"scale_budgets": []},
        {"scale_budgets": [0, 3]},
        {"final_scale_index": 5},
        {"tau": 0.0},
        {"use_rgcn_variant": "sage"},
        {"retrieval_query": "text"},
        {"decode_mode": "sample"},
        {"steps": -1},
        {"batch": 0},
        {"beta2": 1.0},
    ])
    def test_validation(self, changes):
        with pytest.raises(ConfigError):
            PipelineConfig().replace(**changes)

    def test_replace_keeps_other_fields(self):
        config = PipelineConfig(steps=5).replace(use_rgcn_variant="none", use_dvg=False)
        assert config.steps == 5
        assert not config.use_graph
        assert not config.use_dvg

    def test_default_budgets(self):
        assert default_budgets(300) == [60, 120, 180, 240, 300]
        assert default_budgets(100) == [20, 40, 60, 80, 100]
        assert default_budgets(3) == [1, 2, 3]
        with pytest.raises(ConfigError):
            default_budgets(0)
