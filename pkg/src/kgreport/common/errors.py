"""异常定义

所有异常继承 KGReportError；值类错误同时继承 ValueError，查找类错误继承 KeyError/IndexError，
调用方用内置异常捕获同样有效。
"""

from typing import Optional


class KGReportError(Exception):
    """项目异常基类"""


# ---- 知识图谱 ----

class EmptyField(KGReportError, ValueError):
    """必填字段为空"""


class BadEntityType(KGReportError, ValueError):
    """未知实体类型"""


class UnknownEntity(KGReportError, KeyError):
    """实体 id 或 cui 不存在"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "UnknownEntity"


class SelfLoop(KGReportError, ValueError):
    """非 modify 关系的自环"""


class FrozenGraph(KGReportError, RuntimeError):
    """图已冻结，禁止修改"""


class ParseError(KGReportError, ValueError):
    """文件解析失败（带行号）"""

    def __init__(self, message: str, line_no: Optional[int] = None, path: Optional[str] = None):
        self.line_no = line_no
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}"
        if line_no is not None:
            location += f":{line_no}" if location else f"line {line_no}"
        super().__init__(f"{location}: {message}" if location else message)


class SchemaVersionMismatch(KGReportError, ValueError):
    """文件头版本不受支持"""


# ---- 采样 ----

class BadBudgets(KGReportError, ValueError):
    """尺度预算非严格递增或为空"""


# ---- 数值层 ----

class BadDim(KGReportError, ValueError):
    """维度参数非法"""


class BadDims(KGReportError, ValueError):
    """图像尺寸与 patch 不整除"""


class ShapeMismatch(KGReportError, ValueError):
    """张量形状不一致"""


class IndexOutOfRange(KGReportError, IndexError):
    """边索引越界"""


class HeadDivisibility(KGReportError, ValueError):
    """特征宽度不能被头数整除"""


class TooManyNodes(KGReportError, ValueError):
    """节点数超过位置编码容量"""


class BadScaleIndex(KGReportError, IndexError):
    """尺度下标非法"""


class EmptyInput(KGReportError, ValueError):
    """输入为空"""


class EmptyActivation(KGReportError, ValueError):
    """激活图全零"""


class EmptyMemory(KGReportError, ValueError):
    """视觉记忆为空"""


class EmptyGraph(KGReportError, ValueError):
    """图表示为空"""


# ---- 评测 / 流水线 ----

class LengthMismatch(KGReportError, ValueError):
    """两个序列长度不一致"""


class EmptyCorpus(KGReportError, ValueError):
    """语料为空"""


class BadParams(KGReportError, ValueError):
    """参数非法"""


class ConfigError(KGReportError, ValueError):
    """配置非法"""


class CheckpointError(KGReportError, ValueError):
    """检查点文件损坏或不兼容"""
