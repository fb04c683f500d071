"""配置管理模块

两层配置：
    Config          嵌套 YAML（configs/base.yaml 的日志与数据路径、configs/ablation.yaml 的扫描取值）
    PipelineConfig  扁平的模型/训练配置（configs/pipeline.yaml），字段即检查点旁路文件的键
"""

import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

DEFAULT_BASE_CONFIG = Path(__file__).parent.parent.parent.parent / "configs" / "base.yaml"


def _read_yaml(config_path: str) -> Dict[str, Any]:
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"配置文件解析失败: {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件顶层必须是映射: {path}")
    return data


class Config:
    """嵌套 YAML 配置，键用点号访问；.env 中的变量在初始化时载入环境"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Args:
            config_path: 配置文件路径，缺省读取 configs/base.yaml（不存在时为空配置）
        """
        self._config: Dict[str, Any] = {}
        load_dotenv()
        if config_path:
            self.load_config(config_path)
        elif DEFAULT_BASE_CONFIG.exists():
            self.load_config(str(DEFAULT_BASE_CONFIG))

    def load_config(self, config_path: str) -> None:
        self._config.update(_read_yaml(config_path))

    def merge_config(self, config_path: str) -> None:
        """深度合并另一个配置文件，同名键以新文件为准"""
        self._deep_update(self._config, _read_yaml(config_path))

    def _deep_update(self, base: Dict, update: Dict) -> None:
        for key, value in update.items():
            if isinstance(base.get(key), dict) and isinstance(value, dict):
                self._deep_update(base[key], value)
            else:
                base[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        """按 'logging.level' 形式的键读取，缺失时返回 default"""
        value: Any = self._config
        for k in key.split("."):
            if not isinstance(value, dict) or value.get(k) is None:
                return default
            value = value[k]
        return value

    def set(self, key: str, value: Any) -> None:
        *parents, last = key.split(".")
        node = self._config
        for k in parents:
            node = node.setdefault(k, {})
        node[last] = value

    def get_env(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return os.getenv(key, default)

    @property
    def all(self) -> Dict[str, Any]:
        return self._config.copy()


_global_config: Optional[Config] = None


def get_config() -> Config:
    """进程级配置实例，首次访问时读取默认 base.yaml"""
    global _global_config
    if _global_config is None:
        _global_config = Config()
    return _global_config


def init_config(config_path: Optional[str] = None) -> Config:
    """用指定文件（缺省 base.yaml）重建进程级配置"""
    global _global_config
    _global_config = Config(config_path)
    return _global_config


GRAPH_VARIANTS = ("rgcn", "gcn", "gat", "none")
RETRIEVAL_QUERIES = ("vision_grid", "qformer")
DECODE_MODES = ("greedy", "beam")
EMBEDDERS = ("hashed", "external")


def default_budgets(final_budget: int, n_scales: int = 5) -> List[int]:
    """等间距生成 n_scales 个尺度预算，最后一个等于 final_budget

    Args:
        final_budget: 最细尺度的节点预算
        n_scales: 尺度数量

    Returns:
        严格递增的预算列表（final_budget 过小时自动去重）
    """
    if final_budget < 1:
        raise ConfigError(f"final_budget 必须为正: {final_budget}")
    budgets = sorted({max(1, round(final_budget * (i + 1) / n_scales)) for i in range(n_scales)})
    return budgets


@dataclass
class PipelineConfig:
    """端到端流水线配置

    toggles 对应消融表的三个轴：图编码器(RG)、多尺度融合(MF)、疾病视觉记忆(DVG)
    """
    seed: int = 42
    d: int = 64  # 图/视觉特征宽度
    d_dec: int = 64  # 解码器宽度
    heads: int = 4
    scale_budgets: List[int] = field(default_factory=lambda: [60, 120, 180, 240, 300])
    final_scale_index: int = -1  # -1 表示最后一个尺度
    n_visual: int = 500  # 视觉记忆截断数量
    tau: float = 0.5  # 激活图阈值
    retrieval_query: str = "vision_grid"  # vision_grid | qformer
    use_rgcn_variant: str = "rgcn"  # rgcn | gcn | gat | none(关闭图分支)
    use_multiscale: bool = True
    use_dvg: bool = True
    lr: float = 9e-5
    steps: int = 2000
    batch: int = 8
    max_len: int = 64
    # 以下为扩展配置
    graph_layers: int = 2
    add_inverse_relations: bool = False
    final_activation: bool = False
    residual: bool = True
    tie_projections: bool = False
    decoder_layers: int = 2
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    patch: int = 8
    embedder: str = "hashed"
    external_embedder_cmd: str = ""
    decode_mode: str = "greedy"
    beam_k: int = 1
    log_every: int = 50
    eval_workers: int = 1

    def __post_init__(self):
        """验证配置"""
        self.scale_budgets = [int(b) for b in self.scale_budgets]
        for name in ("d", "d_dec", "heads", "n_visual", "batch", "max_len", "graph_layers",
                     "decoder_layers", "patch", "beam_k", "log_every", "eval_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} 必须为正整数: {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigError(f"steps 不能为负: {self.steps}")
        if self.lr <= 0:
            raise ConfigError(f"lr 必须为正: {self.lr}")
        if self.d % self.heads != 0:
            raise ConfigError(f"d={self.d} 不能被 heads={self.heads} 整除")
        if self.d_dec % self.heads != 0:
            raise ConfigError(f"d_dec={self.d_dec} 不能被 heads={self.heads} 整除")
        if not self.scale_budgets:
            raise ConfigError("scale_budgets 不能为空")
        for i in range(1, len(self.scale_budgets)):
            if self.scale_budgets[i] <= self.scale_budgets[i - 1]:
                raise ConfigError(f"scale_budgets 必须严格递增: {self.scale_budgets}")
        if self.scale_budgets[0] < 1:
            raise ConfigError(f"scale_budgets 必须为正: {self.scale_budgets}")
        n_scales = len(self.scale_budgets)
        if not -n_scales <= self.final_scale_index < n_scales:
            raise ConfigError(f"final_scale_index={self.final_scale_index} 超出尺度数 {n_scales}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau 必须在 (0, 1] 内: {self.tau}")
        if self.retrieval_query not in RETRIEVAL_QUERIES:
            raise ConfigError(f"未知 retrieval_query: {self.retrieval_query}，可选 {RETRIEVAL_QUERIES}")
        if self.use_rgcn_variant not in GRAPH_VARIANTS:
            raise ConfigError(f"未知 use_rgcn_variant: {self.use_rgcn_variant}，可选 {GRAPH_VARIANTS}")
        if self.decode_mode not in DECODE_MODES:
            raise ConfigError(f"未知 decode_mode: {self.decode_mode}，可选 {DECODE_MODES}")
        if self.embedder not in EMBEDDERS:
            raise ConfigError(f"未知 embedder: {self.embedder}，可选 {EMBEDDERS}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"beta 必须在 [0, 1) 内: ({self.beta1}, {self.beta2})")

    @property
    def use_graph(self) -> bool:
        """RG 轴：是否启用图分支"""
        return self.use_rgcn_variant != "none"

    @property
    def final_budget(self) -> int:
        return self.scale_budgets[self.final_scale_index]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        """从平铺字典构造，未知键报错；字符串值按字段类型转换

        Args:
            data: 配置字典

        Returns:
            PipelineConfig 实例
        """
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"未知配置键: {unknown}")
        values = {name: _coerce(known[name], value) for name, value in data.items()}
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"配置类型错误: {e}") from e

    def render(self, style: str = "flat") -> str:
        """渲染为文本

        Args:
            style: flat 为 `key = value` 行（# 注释）；yaml 为平铺 YAML 映射
        """
        if style == "yaml":
            return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)
        if style != "flat":
            raise ConfigError(f"未知渲染格式: {style}")
        lines = ["# KGReport pipeline config"]
        for name, value in self.to_dict().items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, list):
                text = ",".join(str(v) for v in value)
            else:
                text = str(value)
            lines.append(f"{name} = {text}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "PipelineConfig":
        """解析 `key = value` 文本或平铺 YAML（render 的逆操作）"""
        flat = _parse_flat(text)
        if flat is not None:
            return cls.from_dict(flat)
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"配置文本解析失败: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("配置文件顶层必须是 key = value 行或 key: value 映射")
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        """从文件加载

        Args:
            path: 配置文件路径

        Returns:
            PipelineConfig 实例
        """
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"配置文件不存在: {p}")
        return cls.parse(p.read_text(encoding="utf-8"))

    def save(self, path: str) -> None:
        """.yaml/.yml 后缀写 YAML，其余写 `key = value` 文本"""
        p = Path(path)
        style = "yaml" if p.suffix in (".yaml", ".yml") else "flat"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.render(style), encoding="utf-8")

    def replace(self, **changes) -> "PipelineConfig":
        """返回修改了部分字段的新配置"""
        data = self.to_dict()
        data.update(changes)
        return PipelineConfig.from_dict(data)


_FLAT_LINE = re.compile(r"^([A-Za-z_]\w*)\s*=(.*)$")
_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def _parse_flat(text: str) -> Optional[Dict[str, str]]:
    """解析 `key = value` 行；没有任何此类行时返回 None 交给 YAML

    # 开头的行与空白后的 # 注释被忽略，值两侧的引号会去掉。
    """
    pairs: Dict[str, str] = {}
    others: List[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"(?:^|\s)#", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        m = _FLAT_LINE.match(line)
        if m is None:
            others.append(line_no)
            continue
        key, value = m.group(1), m.group(2).strip()
        if key in pairs:
            raise ConfigError(f"第 {line_no} 行: 重复的配置键 {key}")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        pairs[key] = value
    if not pairs:
        return None
    if others:
        raise ConfigError(f"第 {others[0]} 行: 不是 key = value 格式")
    return pairs


def _coerce(f, value: Any) -> Any:
    """按字段类型转换配置值，无法转换时报 ConfigError"""
    kind = f.type
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if kind is int:
            if isinstance(value, bool) or isinstance(value, float):
                raise ValueError(value)
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(value)
            # PyYAML 把 9e-5 这类无小数点的科学计数法读成字符串
            return float(value)
        if f.name == "scale_budgets":
            if isinstance(value, str):
                return parse_budgets(value.strip().strip("[]"))
            return [int(b) for b in value]
        if kind is str:
            return "" if value is None else str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置项 {f.name} 取值无效: {value!r}") from e
    return value


def parse_budgets(text: str) -> List[int]:
    """解析 '60,120,180' 形式的预算列表"""
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"无法解析预算列表: {text}") from e
