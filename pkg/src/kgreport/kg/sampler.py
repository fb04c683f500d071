"""按频次裁剪知识图谱，生成嵌套的多尺度子图与边张量

裁剪规则：
    三元组按 (count 降序, 头实体名升序, 尾实体名升序, 关系编码升序) 排序后逐条扫描；
    引入新节点后不超过预算的三元组被接纳。第一次因预算跳过之后，只再接纳两端都已入选的
    三元组。这样节点顺序与预算无关，小预算的 node_ids 必然是大预算的前缀。
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

from ..common.errors import BadBudgets, ParseError
from .models import Triple
from .storage import apply_record, check_header, graph_records, header_record, read_records
from .store import KnowledgeGraph


@dataclass
class Subgraph:
    """单一尺度子图"""
    node_ids: List[int] = field(default_factory=list)  # 首次入选顺序
    triples: List[Triple] = field(default_factory=list)  # 排序后的保留三元组
    edge_index: np.ndarray = field(default_factory=lambda: np.zeros((2, 0), dtype=np.int64))
    edge_type: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.triples)


@dataclass
class MultiScaleGraph:
    """嵌套多尺度子图集合"""
    scales: List[Tuple[int, Subgraph]]
    offsets: List[int]  # 各尺度在拼接节点维上的起始行

    @property
    def budgets(self) -> List[int]:
        return [b for b, _ in self.scales]

    @property
    def subgraphs(self) -> List[Subgraph]:
        return [s for _, s in self.scales]

    @property
    def n_total(self) -> int:
        return sum(s.n_nodes for _, s in self.scales)


def sort_triples(graph: KnowledgeGraph) -> List[Triple]:
    """按频次及名称的全序排序三元组"""
    names = {eid: e.name for eid, e in graph.entities.items()}
    return sorted(
        graph.triples,
        key=lambda t: (-t.count, names[t.head_id], names[t.tail_id], t.relation.value),
    )


def _prune_sorted(ordered: Sequence[Triple], budget: int) -> Subgraph:
    """首次超出预算后只再收录两端均已入选的三元组，保证小预算结果是大预算结果的前缀"""
    nodes: List[int] = []
    chosen = set()
    kept: List[Triple] = []
    overflowed = False
    for t in ordered:
        new = [n for n in dict.fromkeys((t.head_id, t.tail_id)) if n not in chosen]
        if not new:
            kept.append(t)
            continue
        if overflowed or len(nodes) + len(new) > budget:
            overflowed = True
            continue
        for n in new:
            chosen.add(n)
            nodes.append(n)
        kept.append(t)
    sub = Subgraph(node_ids=nodes, triples=kept)
    sub.edge_index, sub.edge_type = build_edge_tensors(sub)
    return sub


def prune_to_budget(graph: KnowledgeGraph, budget: int) -> Subgraph:
    """把图裁剪到不超过 budget 个节点

    Args:
        graph: 知识图谱
        budget: 节点预算（>= 0）

    Returns:
        Subgraph
    """
    if budget < 0:
        raise BadBudgets(f"预算不能为负: {budget}")
    return _prune_sorted(sort_triples(graph), budget)


def build_edge_tensors(subgraph: Subgraph) -> Tuple[np.ndarray, np.ndarray]:
    """构造边张量

    Args:
        subgraph: 子图

    Returns:
        (edge_index 2×n_r, edge_type n_r)，位置为 node_ids 中的下标
    """
    position: Dict[int, int] = {nid: i for i, nid in enumerate(subgraph.node_ids)}
    n_r = len(subgraph.triples)
    edge_index = np.zeros((2, n_r), dtype=np.int64)
    edge_type = np.zeros(n_r, dtype=np.int64)
    for j, t in enumerate(subgraph.triples):
        edge_index[0, j] = position[t.head_id]
        edge_index[1, j] = position[t.tail_id]
        edge_type[j] = t.relation.value
    return edge_index, edge_type


def build_multiscale(graph: KnowledgeGraph, budgets: Sequence[int]) -> MultiScaleGraph:
    """按预算列表构造多尺度子图

    Args:
        graph: 知识图谱
        budgets: 严格递增的节点预算

    Returns:
        MultiScaleGraph
    """
    budgets = [int(b) for b in budgets]
    if not budgets:
        raise BadBudgets("预算列表不能为空")
    if budgets[0] < 0:
        raise BadBudgets(f"预算不能为负: {budgets}")
    for i in range(1, len(budgets)):
        if budgets[i] <= budgets[i - 1]:
            raise BadBudgets(f"预算必须严格递增: {budgets}")

    ordered = sort_triples(graph)
    scales = []
    offsets = []
    running = 0
    for b in budgets:
        sub = _prune_sorted(ordered, b)
        scales.append((b, sub))
        offsets.append(running)
        running += sub.n_nodes
        logger.debug(f"尺度 budget={b}: 节点={sub.n_nodes}, 边={sub.n_edges}")

    logger.info(
        f"多尺度子图构造完成: 预算={budgets}, 实际节点={[s.n_nodes for _, s in scales]}, "
        f"N_total={running}"
    )
    return MultiScaleGraph(scales=scales, offsets=offsets)


def subgraph_as_graph(graph: KnowledgeGraph, subgraph: Subgraph) -> KnowledgeGraph:
    """把子图物化为独立的 KnowledgeGraph（实体按 node_ids 顺序）"""
    out = KnowledgeGraph(d_vision=graph.d_vision)
    remap = {}
    for nid in subgraph.node_ids:
        e = graph.entities[nid]
        remap[nid] = out.add_entity({
            "cui": e.cui, "name": e.name, "entity_type": e.entity_type,
            "aliases": e.aliases, "definition": e.definition, "tui": e.tui,
        })
    for t in subgraph.triples:
        out.add_triple(remap[t.head_id], remap[t.tail_id], t.relation, count=t.count)
    return out


def save_scales(graph: KnowledgeGraph, msg: MultiScaleGraph, path: str) -> None:
    """写出多尺度子图文件：header 之后每个尺度一条 scale 记录，跟随该尺度的实体与三元组

    Args:
        graph: 原图
        msg: 多尺度子图
        path: 输出路径
    """
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header_record(graph.d_vision), ensure_ascii=False) + "\n")
        for index, (budget, sub) in enumerate(msg.scales):
            f.write(json.dumps({
                "kind": "scale", "index": index, "budget": budget,
                "n_nodes": sub.n_nodes, "n_triples": sub.n_edges, "offset": msg.offsets[index],
            }) + "\n")
            for record in graph_records(subgraph_as_graph(graph, sub)):
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.info(f"多尺度子图已保存: {file_path} ({len(msg.scales)} 个尺度)")


def load_scales(path: str) -> List[Tuple[int, KnowledgeGraph]]:
    """读取 save_scales 写出的文件

    Returns:
        [(budget, 该尺度子图)]，子图实体 id 即尺度内节点位置
    """
    records = read_records(path)
    if not records:
        raise ParseError("文件为空，缺少 header", 1, str(path))
    line_no, header = records[0]
    d_vision = check_header(line_no, header, str(path))
    result: List[Tuple[int, KnowledgeGraph]] = []
    seen_triple = False
    for line_no, record in records[1:]:
        if record.get("kind") == "scale":
            result.append((int(record["budget"]), KnowledgeGraph(d_vision=d_vision)))
            seen_triple = False
            continue
        if not result:
            raise ParseError("scale 记录之前出现了图记录", line_no, str(path))
        seen_triple = apply_record(result[-1][1], line_no, record, str(path), seen_triple)
    return result
