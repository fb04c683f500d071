"""知识图谱数据模型"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List

import numpy as np

from ..common.errors import BadEntityType

# CheXpert 14 标签顺序（固定）
LABELS = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
]
N_LABELS = len(LABELS)


class EntityType(Enum):
    """实体类型（六类）"""
    ANATOMY = "Anatomy"
    DISORDER = "Disorder"
    CONCEPT = "Concept"
    DEVICE = "Device"
    PROCEDURE = "Procedure"
    SIZE = "Size"

    @classmethod
    def parse(cls, value) -> "EntityType":
        """解析实体类型字符串，未知值抛出 BadEntityType"""
        if isinstance(value, EntityType):
            return value
        for member in cls:
            if member.value == value:
                return member
        raise BadEntityType(f"未知实体类型: {value!r}，可选 {[m.value for m in cls]}")


class RelationType(Enum):
    """关系类型，整数编码在存取前后保持稳定"""
    LOCATED_AT = 0
    MODIFY = 1
    SUGGESTIVE_OF = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "RelationType":
        """按名称（located_at/modify/suggestive_of）或编码解析"""
        if isinstance(value, RelationType):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            for member in cls:
                if member.value == value:
                    return member
        if isinstance(value, str):
            for member in cls:
                if member.label == value:
                    return member
        raise ValueError(f"未知关系类型: {value!r}")


N_RELATIONS = len(RelationType)


@dataclass
class Entity:
    """实体"""
    id: int  # 插入顺序分配的代理键
    cui: str  # 概念唯一标识
    name: str
    entity_type: EntityType
    aliases: List[str] = field(default_factory=list)
    definition: str = ""
    tui: str = ""


@dataclass
class Triple:
    """关系三元组 (head, tail, relation)，count 为贡献该三元组的报告数"""
    head_id: int
    tail_id: int
    relation: RelationType
    count: int = 1

    @property
    def key(self):
        return (self.head_id, self.tail_id, self.relation.value)


@dataclass
class VisionToken:
    """疾病视觉 token：激活区域内 patch 特征的均值"""
    id: int
    label_index: int  # [0, 14)
    feature: np.ndarray
    source_id: str = ""

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisionToken):
            return NotImplemented
        return (
            self.id == other.id
            and self.label_index == other.label_index
            and self.source_id == other.source_id
            and self.feature.shape == other.feature.shape
            and bool(np.array_equal(self.feature, other.feature))
        )
