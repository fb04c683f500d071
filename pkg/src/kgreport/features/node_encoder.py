"""实体文本序列化与节点特征编码

流程：entity_text -> embed_tokens (L×d) -> mean_pool (d) -> 按 node_ids 顺序堆叠为 V (n×d)
"""

import shlex
import subprocess
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

from ..common.errors import BadDim, KGReportError, ShapeMismatch, UnknownEntity
from ..kg.models import Entity

FIELD_SEPARATOR = " | "

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
FNV_MASK = (1 << 64) - 1


def entity_text(entity: Entity) -> str:
    """按 CUI, Name, Definition, TUI, Aliases 顺序拼接实体文本

    空字段保留为空段，别名按存储顺序以 ", " 连接。
    """
    return FIELD_SEPARATOR.join([
        entity.cui,
        entity.name,
        entity.definition,
        entity.tui,
        ", ".join(entity.aliases),
    ])


def fnv1a_64(data: bytes) -> int:
    """64 位 FNV-1a 哈希"""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & FNV_MASK
    return h


def tokenize_text(text: str) -> List[str]:
    """大小写折叠后按空白切分"""
    return text.casefold().split()


class TextEmbedder(ABC):
    """文本嵌入器接口"""

    name: str = "base"

    @abstractmethod
    def embed_tokens(self, text: str, d: int) -> np.ndarray:
        """把文本嵌入为 L×d 矩阵（L 为空白切分后的 token 数）"""

    def embed_texts(self, texts: Sequence[str], d: int) -> List[np.ndarray]:
        return [self.embed_tokens(t, d) for t in texts]


class HashedEmbedder(TextEmbedder):
    """确定性哈希嵌入：每个 token 一行 one-hot，热位 = FNV-1a-64(utf-8) mod d"""

    name = "hashed"

    def embed_tokens(self, text: str, d: int) -> np.ndarray:
        if d < 1:
            raise BadDim(f"嵌入维度必须 >= 1: {d}")
        tokens = tokenize_text(text)
        out = np.zeros((len(tokens), d), dtype=np.float64)
        for row, token in enumerate(tokens):
            out[row, fnv1a_64(token.encode("utf-8")) % d] = 1.0
        return out


class ExternalEmbedder(TextEmbedder):
    """外部嵌入进程

    每个实体文本写一行到 stdin，进程按行输出空白分隔的浮点数（每行一个已池化的 d 维向量）。
    外部进程直接给出句向量，因此 embed_tokens 返回 1×d 矩阵，mean_pool 后不变。
    """

    name = "external"

    def __init__(self, command: str, timeout: float = 600.0):
        if not command.strip():
            raise KGReportError("外部嵌入器命令为空，请配置 external_embedder_cmd")
        self.command = command
        self.timeout = timeout
        self._cache: Dict[Tuple[str, int], np.ndarray] = {}

    def _run(self, texts: Sequence[str], d: int) -> List[np.ndarray]:
        payload = "".join(t.replace("\n", " ") + "\n" for t in texts)
        logger.debug(f"调用外部嵌入器: {self.command} ({len(texts)} 条文本)")
        proc = subprocess.run(
            shlex.split(self.command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=self.timeout,
            check=False,
        )
        if proc.returncode != 0:
            raise KGReportError(f"外部嵌入器退出码 {proc.returncode}: {proc.stderr.strip()}")
        lines = [line for line in proc.stdout.splitlines() if line.strip()]
        if len(lines) != len(texts):
            raise ShapeMismatch(f"外部嵌入器输出 {len(lines)} 行，期望 {len(texts)} 行")
        rows = []
        for i, line in enumerate(lines):
            vec = np.array([float(x) for x in line.split()], dtype=np.float64)
            if vec.shape[0] != d:
                raise ShapeMismatch(f"外部嵌入器第 {i + 1} 行维度 {vec.shape[0]}，期望 {d}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"外部嵌入器第 {i + 1} 行含非有限值")
            rows.append(vec.reshape(1, d))
        return rows

    def embed_texts(self, texts: Sequence[str], d: int) -> List[np.ndarray]:
        if d < 1:
            raise BadDim(f"嵌入维度必须 >= 1: {d}")
        missing = [t for t in dict.fromkeys(texts) if (t, d) not in self._cache]
        if missing:
            for text, row in zip(missing, self._run(missing, d)):
                self._cache[(text, d)] = row
        return [self._cache[(t, d)] for t in texts]

    def embed_tokens(self, text: str, d: int) -> np.ndarray:
        return self.embed_texts([text], d)[0]


def make_embedder(name: str, command: str = "") -> TextEmbedder:
    """按配置名称构造嵌入器"""
    if name == "hashed":
        return HashedEmbedder()
    if name == "external":
        return ExternalEmbedder(command)
    raise KGReportError(f"未知嵌入器: {name}")


def mean_pool(token_matrix: np.ndarray) -> np.ndarray:
    """按列求均值；0 行输入返回零向量"""
    token_matrix = np.asarray(token_matrix, dtype=np.float64)
    if token_matrix.shape[0] == 0:
        return np.zeros(token_matrix.shape[1], dtype=np.float64)
    return token_matrix.mean(axis=0)


@dataclass
class NodeFeatureMatrix:
    """节点特征矩阵 V"""
    values: np.ndarray  # n×d
    node_ids: List[int] = field(default_factory=list)

    @property
    def d(self) -> int:
        return int(self.values.shape[1])

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def encode_nodes(
    node_ids: Sequence[int],
    entities: Dict[int, Entity],
    embedder: TextEmbedder,
    d: int,
) -> NodeFeatureMatrix:
    """编码子图节点

    Args:
        node_ids: 子图节点 id（Subgraph.node_ids）
        entities: 实体表（KnowledgeGraph.entities）
        embedder: 文本嵌入器
        d: 嵌入维度

    Returns:
        NodeFeatureMatrix，第 i 行对应 node_ids[i]
    """
    if d < 1:
        raise BadDim(f"嵌入维度必须 >= 1: {d}")
    node_ids = list(node_ids)
    for nid in node_ids:
        if nid not in entities:
            raise UnknownEntity(f"子图节点 {nid} 不在实体表中")
    texts = [entity_text(entities[nid]) for nid in node_ids]
    values = np.zeros((len(node_ids), d), dtype=np.float64)
    for i, mat in enumerate(embedder.embed_texts(texts, d)):
        values[i] = mean_pool(mat)
    return NodeFeatureMatrix(values=values, node_ids=node_ids)
