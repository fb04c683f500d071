"""多模态知识图谱构建：合并三元组文件并从语料激活图抽取疾病视觉 token

视觉骨干为恒等映射：patch 特征即展平后的像素，d_vision = patch²。
"""

from typing import List, Optional, Sequence

from loguru import logger

from ..common.errors import BadParams, EmptyActivation
from ..kg import storage
from ..kg.store import KnowledgeGraph
from ..nn.vision import extract_vision_tokens, patchify
from .corpus import ReportPair


def add_vision_tokens(graph: KnowledgeGraph, pairs: Sequence[ReportPair], patch: int, tau: float) -> int:
    """为每个 (图像, 阳性标签) 抽取一个 token 并加入图

    Returns:
        新增 token 数
    """
    added = 0
    for pair in pairs:
        if not pair.activation_maps:
            continue
        grid = patchify(pair.load_image(), patch)
        for label_index in sorted(pair.activation_maps):
            try:
                tokens = extract_vision_tokens(
                    pair.load_activation_map(label_index), grid, tau, label_index, pair.id
                )
            except EmptyActivation:
                logger.warning(f"激活图全零，跳过: {pair.id} 标签 {label_index}")
                continue
            for token in tokens:
                graph.add_vision_token(token.label_index, token.feature, token.source_id)
                added += 1
    return added


def build_kg(
    triple_paths: Sequence[str],
    pairs: Optional[List[ReportPair]] = None,
    patch: int = 8,
    tau: float = 0.5,
) -> KnowledgeGraph:
    """合并一个或多个三元组文件，并（可选）加入语料的视觉 token

    Args:
        triple_paths: m3kg 文件列表，按顺序合并
        pairs: 带激活图的语料
        patch: patch 大小
        tau: 激活阈值

    Returns:
        KnowledgeGraph（未冻结）
    """
    if not triple_paths:
        raise BadParams("至少需要一个三元组文件")
    graph = storage.load(triple_paths[0])
    for path in triple_paths[1:]:
        storage.merge_into(graph, path)
    if pairs:
        d_vision = patch * patch
        if graph.vision_tokens and graph.d_vision != d_vision:
            raise BadParams(f"已有视觉 token 维度 {graph.d_vision} 与 patch²={d_vision} 不一致")
        graph.d_vision = d_vision
        added = add_vision_tokens(graph, pairs, patch, tau)
        logger.info(f"视觉 token 抽取完成: 新增 {added} 个 (tau={tau}, d_vision={d_vision})")
    return graph
