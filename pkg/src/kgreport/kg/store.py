"""多模态知识图谱容器

构建阶段单线程可变；freeze() 之后只读，可被多个工作线程并发读取。
"""

from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..common.errors import EmptyField, FrozenGraph, UnknownEntity, SelfLoop, ShapeMismatch
from .models import N_LABELS, Entity, EntityType, RelationType, Triple, VisionToken

# 合并判定钩子：(已有实体, 新记录) -> 是否视为同一概念
MergePredicate = Callable[[Entity, Dict[str, Any]], bool]


def _merge_aliases(existing: List[str], incoming: List[str]) -> List[str]:
    """按大小写折叠去重合并别名，保持首次出现顺序"""
    seen = {a.casefold() for a in existing}
    merged = list(existing)
    for alias in incoming:
        key = alias.casefold()
        if key not in seen:
            seen.add(key)
            merged.append(alias)
    return merged


class KnowledgeGraph:
    """类型化知识图谱：实体 + 计数三元组 + 疾病视觉 token"""

    def __init__(self, d_vision: int = 0):
        """初始化空图

        Args:
            d_vision: 视觉 token 特征维度
        """
        self.d_vision = int(d_vision)
        self.entities: Dict[int, Entity] = {}
        self.triples: List[Triple] = []
        self.vision_tokens: List[VisionToken] = []
        self._cui_index: Dict[str, int] = {}
        self._triple_index: Dict[Tuple[int, int, int], int] = {}
        self._frozen = False

    # ---- 生命周期 ----

    def freeze(self) -> "KnowledgeGraph":
        """冻结图，之后的修改操作抛出 FrozenGraph"""
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenGraph("知识图谱已冻结，不能再修改")

    # ---- 实体 ----

    def add_entity(self, record: Dict[str, Any], merge_predicate: Optional[MergePredicate] = None) -> int:
        """添加实体；cui 已存在时返回已有 id 并合并别名

        Args:
            record: 实体记录，包含 cui/name/entity_type，可选 aliases/definition/tui
            merge_predicate: 可选的相似合并判定，对 cui 不同的已有实体逐一调用

        Returns:
            实体 id
        """
        self._check_mutable()
        cui = str(record.get("cui") or "").strip()
        name = str(record.get("name") or "").strip()
        if not cui:
            raise EmptyField(f"实体 cui 为空: {record}")
        if not name:
            raise EmptyField(f"实体 name 为空: cui={cui}")
        entity_type = EntityType.parse(record.get("entity_type"))
        aliases = _merge_aliases([], [str(a) for a in record.get("aliases") or []])

        key = cui.casefold()
        if key in self._cui_index:
            entity = self.entities[self._cui_index[key]]
            entity.aliases = _merge_aliases(entity.aliases, aliases)
            return entity.id

        if merge_predicate is not None:
            for entity in self.entities.values():
                if merge_predicate(entity, record):
                    entity.aliases = _merge_aliases(entity.aliases, [name] + aliases)
                    self._cui_index[key] = entity.id
                    logger.debug(f"实体 {cui} 合并入 {entity.cui}")
                    return entity.id

        entity_id = len(self.entities)
        self.entities[entity_id] = Entity(
            id=entity_id,
            cui=cui,
            name=name,
            entity_type=entity_type,
            aliases=aliases,
            definition=str(record.get("definition") or ""),
            tui=str(record.get("tui") or ""),
        )
        self._cui_index[key] = entity_id
        return entity_id

    def get_entity(self, entity_id: int) -> Entity:
        if entity_id not in self.entities:
            raise UnknownEntity(f"实体 id 不存在: {entity_id}")
        return self.entities[entity_id]

    def id_for_cui(self, cui: str) -> int:
        """按 cui（大小写折叠）查找实体 id"""
        key = str(cui).strip().casefold()
        if key not in self._cui_index:
            raise UnknownEntity(f"实体 cui 不存在: {cui!r}")
        return self._cui_index[key]

    # ---- 三元组 ----

    def add_triple(self, head_id: int, tail_id: int, relation, count: int = 1) -> int:
        """添加三元组；重复键累加计数

        Args:
            head_id: 头实体 id
            tail_id: 尾实体 id
            relation: RelationType、关系名或编码
            count: 本次增加的计数（默认 1）

        Returns:
            三元组下标
        """
        self._check_mutable()
        relation = RelationType.parse(relation)
        for eid in (head_id, tail_id):
            if eid not in self.entities:
                raise UnknownEntity(f"实体 id 不存在: {eid}")
        if head_id == tail_id and relation != RelationType.MODIFY:
            raise SelfLoop(f"实体 {head_id} 不允许 {relation.label} 自环")
        if count < 0:
            raise ValueError(f"三元组计数不能为负: {count}")

        key = (head_id, tail_id, relation.value)
        if key in self._triple_index:
            index = self._triple_index[key]
            self.triples[index].count += count
            return index

        index = len(self.triples)
        self.triples.append(Triple(head_id=head_id, tail_id=tail_id, relation=relation, count=count))
        self._triple_index[key] = index
        return index

    # ---- 视觉 token ----

    def add_vision_token(self, label_index: int, feature, source_id: str = "") -> int:
        """添加疾病视觉 token

        Args:
            label_index: 标签下标 [0, 14)
            feature: 长度为 d_vision 的特征向量
            source_id: 来源图像标识

        Returns:
            token id
        """
        self._check_mutable()
        if not 0 <= int(label_index) < N_LABELS:
            raise ValueError(f"label_index 超出 [0, {N_LABELS}): {label_index}")
        vec = np.asarray(feature, dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.d_vision:
            raise ShapeMismatch(f"视觉 token 维度 {vec.shape[0]} 与图声明的 d_vision={self.d_vision} 不一致")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"视觉 token 含非有限值: source={source_id}")
        token_id = len(self.vision_tokens)
        self.vision_tokens.append(
            VisionToken(id=token_id, label_index=int(label_index), feature=vec, source_id=str(source_id))
        )
        return token_id

    # ---- 统计与导出 ----

    def stats(self) -> Dict[str, Any]:
        """统计图规模

        Returns:
            {n_entities, n_triples, n_triple_instances, n_vision_tokens,
             per_relation_counts, per_relation_instances}
        """
        per_relation = {r.value: 0 for r in RelationType}
        per_relation_instances = {r.value: 0 for r in RelationType}
        for t in self.triples:
            per_relation[t.relation.value] += 1
            per_relation_instances[t.relation.value] += t.count
        return {
            "n_entities": len(self.entities),
            "n_triples": len(self.triples),
            "n_triple_instances": sum(t.count for t in self.triples),
            "n_vision_tokens": len(self.vision_tokens),
            "per_relation_counts": per_relation,
            "per_relation_instances": per_relation_instances,
        }

    def incident_counts(self) -> Dict[int, int]:
        """每个实体关联的（去重）三元组数量"""
        counts = {eid: 0 for eid in self.entities}
        for t in self.triples:
            counts[t.head_id] += 1
            if t.tail_id != t.head_id:
                counts[t.tail_id] += 1
        return counts

    def export_dot(self, max_nodes: int) -> str:
        """导出 DOT 有向图文本

        节点按关联三元组数降序、名称升序取前 max_nodes 个；只输出两端都入选的边。

        Args:
            max_nodes: 最大节点数

        Returns:
            DOT 文本
        """
        if max_nodes < 0:
            raise ValueError(f"max_nodes 不能为负: {max_nodes}")
        counts = self.incident_counts()
        ranked = sorted(self.entities.values(), key=lambda e: (-counts[e.id], e.name, e.id))
        selected = ranked[:max_nodes]
        chosen = {e.id for e in selected}

        lines = ["digraph M3KG {"]
        for e in selected:
            label = _dot_escape(f"{e.name}({e.entity_type.value})")
            lines.append(f'  n{e.id} [label="{label}"];')
        for t in self.triples:
            if t.head_id in chosen and t.tail_id in chosen:
                lines.append(f'  n{t.head_id} -> n{t.tail_id} [label="{t.relation.label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # ---- 比较 ----

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.d_vision == other.d_vision
            and self.entities == other.entities
            and self.triples == other.triples
            and self.vision_tokens == other.vision_tokens
        )

    def __repr__(self) -> str:
        s = self.stats()
        return (
            f"KnowledgeGraph(entities={s['n_entities']}, triples={s['n_triples']}, "
            f"tokens={s['n_vision_tokens']}, d_vision={self.d_vision})"
        )


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
