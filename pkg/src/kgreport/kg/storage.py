"""知识图谱 JSON Lines 持久化

文件格式：
    第 1 行 header: {"kind":"header","format":"m3kg","version":1,"d_vision":<int>}
    之后为 entity / triple / vision_token 记录；triple 通过 cui 引用实体，实体必须先于三元组出现。
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple

from loguru import logger

from ..common.errors import KGReportError, ParseError, SchemaVersionMismatch
from .models import RelationType
from .store import KnowledgeGraph

FORMAT_NAME = "m3kg"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)


def header_record(d_vision: int) -> Dict[str, Any]:
    return {"kind": "header", "format": FORMAT_NAME, "version": FORMAT_VERSION, "d_vision": int(d_vision)}


def graph_records(graph: KnowledgeGraph) -> Iterator[Dict[str, Any]]:
    """按 entity -> triple -> vision_token 顺序生成记录（不含 header）"""
    for entity in graph.entities.values():
        yield {
            "kind": "entity",
            "cui": entity.cui,
            "name": entity.name,
            "entity_type": entity.entity_type.value,
            "aliases": list(entity.aliases),
            "definition": entity.definition,
            "tui": entity.tui,
        }
    for t in graph.triples:
        yield {
            "kind": "triple",
            "head_cui": graph.entities[t.head_id].cui,
            "tail_cui": graph.entities[t.tail_id].cui,
            "relation": t.relation.label,
            "count": int(t.count),
        }
    for token in graph.vision_tokens:
        yield {
            "kind": "vision_token",
            "label_index": int(token.label_index),
            "source_id": token.source_id,
            "feature": [float(x) for x in token.feature],
        }


def save(graph: KnowledgeGraph, path: str) -> None:
    """保存知识图谱

    Args:
        graph: 知识图谱
        path: 输出文件路径
    """
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header_record(graph.d_vision), ensure_ascii=False) + "\n")
        for record in graph_records(graph):
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    s = graph.stats()
    logger.info(
        f"知识图谱已保存: {file_path} (实体={s['n_entities']}, 三元组={s['n_triples']}, "
        f"视觉token={s['n_vision_tokens']})"
    )


def read_records(path: str) -> List[Tuple[int, Dict[str, Any]]]:
    """读取 JSONL 记录并附带行号（跳过空行）"""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"文件不存在: {file_path}")
    records = []
    with open(file_path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"JSON 解析失败: {e.msg}", line_no, str(file_path)) from e
            if not isinstance(record, dict) or "kind" not in record:
                raise ParseError("记录缺少 kind 字段", line_no, str(file_path))
            records.append((line_no, record))
    return records


def check_header(line_no: int, record: Dict[str, Any], path: str) -> int:
    """校验 header 记录，返回 d_vision"""
    if record.get("kind") != "header":
        raise ParseError(f"首条记录必须是 header，实际为 {record.get('kind')!r}", line_no, path)
    if record.get("format") != FORMAT_NAME:
        raise ParseError(f"未知文件格式: {record.get('format')!r}", line_no, path)
    version = record.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise SchemaVersionMismatch(f"{path}:{line_no}: 不支持的版本 {version!r}，支持 {SUPPORTED_VERSIONS}")
    try:
        return int(record.get("d_vision", 0))
    except (TypeError, ValueError) as e:
        raise ParseError(f"d_vision 非整数: {record.get('d_vision')!r}", line_no, path) from e


def apply_record(graph: KnowledgeGraph, line_no: int, record: Dict[str, Any], path: str, seen_triple: bool) -> bool:
    """把单条记录写入图；返回是否已出现过三元组记录"""
    kind = record.get("kind")
    try:
        if kind == "entity":
            if seen_triple:
                raise ParseError("实体记录必须位于三元组之前", line_no, path)
            graph.add_entity(record)
        elif kind == "triple":
            head = graph.id_for_cui(record["head_cui"])
            tail = graph.id_for_cui(record["tail_cui"])
            relation = RelationType.parse(record["relation"])
            count = int(record.get("count", 1))
            graph.add_triple(head, tail, relation, count=count)
            seen_triple = True
        elif kind == "vision_token":
            graph.add_vision_token(record["label_index"], record["feature"], record.get("source_id", ""))
        else:
            raise ParseError(f"未知记录类型: {kind!r}", line_no, path)
    except ParseError:
        raise
    except (KGReportError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{kind} 记录无效: {e}", line_no, path) from e
    return seen_triple


def load(path: str) -> KnowledgeGraph:
    """加载知识图谱

    Args:
        path: 文件路径

    Returns:
        KnowledgeGraph（未冻结，调用方按需 freeze）
    """
    records = read_records(path)
    if not records:
        raise ParseError("文件为空，缺少 header", 1, str(path))
    line_no, header = records[0]
    graph = KnowledgeGraph(d_vision=check_header(line_no, header, str(path)))
    seen_triple = False
    for line_no, record in records[1:]:
        seen_triple = apply_record(graph, line_no, record, str(path), seen_triple)
    s = graph.stats()
    logger.info(
        f"知识图谱已加载: {path} (实体={s['n_entities']}, 三元组={s['n_triples']}, "
        f"实例={s['n_triple_instances']}, 视觉token={s['n_vision_tokens']})"
    )
    return graph


def merge_into(graph: KnowledgeGraph, path: str) -> KnowledgeGraph:
    """把另一个图文件的实体与三元组合并进已有图（计数累加，视觉 token 追加）

    Args:
        graph: 目标图（可变）
        path: 源文件路径

    Returns:
        目标图
    """
    records = read_records(path)
    if not records:
        raise ParseError("文件为空，缺少 header", 1, str(path))
    line_no, header = records[0]
    d_vision = check_header(line_no, header, str(path))
    if graph.d_vision == 0 and not graph.vision_tokens:
        graph.d_vision = d_vision
    seen_triple = False
    for line_no, record in records[1:]:
        seen_triple = apply_record(graph, line_no, record, str(path), seen_triple)
    return graph
