"""视觉路径：patch 编码、Q-former、疾病视觉 token 抽取与视觉记忆检索"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..common.errors import BadDims, BadParams, EmptyActivation, EmptyInput, EmptyMemory, ShapeMismatch
from ..kg.models import N_LABELS, VisionToken
from .attention import MultiHeadAttention
from .base import Grads, Module, glorot_uniform, with_prefix

N_CONCEPTS = N_LABELS


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """按行优先切分为不重叠 patch，每个 patch 按行优先展平

    Returns:
        P×(patch²)，P = (H/patch)·(W/patch)
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise BadDims(f"图像必须是二维矩阵: {image.shape}")
    h, w = image.shape
    if patch < 1 or h % patch or w % patch:
        raise BadDims(f"图像尺寸 {h}×{w} 不能被 patch={patch} 整除")
    gh, gw = h // patch, w // patch
    return image.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3).reshape(gh * gw, patch * patch)


class PatchEncoder(Module):
    """F_v = patches·W_patch + b"""

    def __init__(self, patch: int, d: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.patch = patch
        self.d = d
        self.params = {
            "W_patch": glorot_uniform(rng, patch * patch, d),
            "b": np.zeros(d),
        }

    def forward(self, image: np.ndarray) -> Tuple[np.ndarray, dict]:
        patches = patchify(image, self.patch)
        return patches @ self.params["W_patch"] + self.params["b"], {"patches": patches}

    def backward(self, dF: np.ndarray, cache: dict) -> Grads:
        return {"W_patch": cache["patches"].T @ dF, "b": dF.sum(axis=0)}


def encode_image(image: np.ndarray, encoder: PatchEncoder) -> np.ndarray:
    return encoder.forward(image)[0]


class QFormer(Module):
    """C=14 个可学习查询对 F_v 做一次交叉注意力，查询带残差"""

    def __init__(self, d: int, heads: int, n_queries: int = N_CONCEPTS, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {"queries": rng.normal(0.0, 0.02, size=(n_queries, d))}
        self.attn = MultiHeadAttention(d, d, d, heads, rng)
        self.children["attn"] = self.attn

    def forward(self, F_v: np.ndarray) -> Tuple[np.ndarray, dict]:
        if F_v.shape[0] == 0:
            raise EmptyInput("Q-former 输入 F_v 为空")
        q = self.params["queries"]
        out, cache = self.attn.forward(q, F_v)
        return q + out, cache

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        dq, dF_v, g = self.attn.backward(dout, cache)
        grads = with_prefix(g, "attn")
        grads["queries"] = dout + dq
        return dF_v, grads


def qformer(F_v: np.ndarray, module: QFormer) -> np.ndarray:
    return module.forward(F_v)[0]


def extract_vision_tokens(
    activation_map: np.ndarray,
    F_v_grid: np.ndarray,
    tau: float,
    label_index: int,
    source_id: str = "",
) -> List[VisionToken]:
    """按激活图阈值抽取疾病视觉 token

    激活图按最大值归一化，选出 M̄ >= tau 的 patch，输出一个特征为所选行均值的 token。

    Args:
        activation_map: patch 网格分辨率的激活图（行优先展平后与 F_v_grid 行对齐）
        F_v_grid: P×d patch 特征
        tau: 阈值 (0, 1]
        label_index: 标签下标
        source_id: 来源图像标识

    Returns:
        单元素 token 列表
    """
    M = np.asarray(activation_map, dtype=np.float64).reshape(-1)
    F = np.asarray(F_v_grid, dtype=np.float64)
    if M.shape[0] != F.shape[0]:
        raise ShapeMismatch(f"激活图大小 {M.shape[0]} 与 patch 数 {F.shape[0]} 不一致")
    if not 0.0 < tau <= 1.0:
        raise BadParams(f"tau 必须在 (0, 1] 内: {tau}")
    if not 0 <= label_index < N_LABELS:
        raise BadParams(f"label_index 超出 [0, {N_LABELS}): {label_index}")
    if np.any(M < 0):
        raise BadParams("激活图含负值")
    peak = M.max() if M.size else 0.0
    if peak <= 0:
        raise EmptyActivation(f"激活图全零: source={source_id}, label={label_index}")
    selected = (M / peak) >= tau
    feature = F[selected].mean(axis=0)
    return [VisionToken(id=0, label_index=int(label_index), feature=feature, source_id=str(source_id))]


@dataclass
class VisionMemory:
    """视觉记忆 K_V（按插入顺序取前 n_visual 个 token）"""
    K_V: np.ndarray
    label_indices: List[int]

    @property
    def n(self) -> int:
        return int(self.K_V.shape[0])

    @classmethod
    def from_graph(cls, graph, n_visual: Optional[int] = None) -> "VisionMemory":
        tokens = graph.vision_tokens if n_visual is None else graph.vision_tokens[:n_visual]
        if n_visual is not None and len(graph.vision_tokens) < n_visual:
            logger.warning(f"视觉记忆不足: 图中仅有 {len(graph.vision_tokens)} 个 token，n_visual={n_visual}")
        if tokens:
            K_V = np.stack([t.feature for t in tokens]).astype(np.float64)
        else:
            K_V = np.zeros((0, graph.d_vision))
        return cls(K_V=K_V, label_indices=[t.label_index for t in tokens])


class Retriever(Module):
    """F_kv = CrossAttention(query, K_V, K_V)，无残差"""

    def __init__(self, d: int, d_vision: int, heads: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.attn = MultiHeadAttention(d, d_vision, d, heads, rng)
        self.children["attn"] = self.attn

    def forward(self, query: np.ndarray, memory: VisionMemory) -> Tuple[np.ndarray, dict]:
        if memory.n == 0:
            raise EmptyMemory("视觉记忆为空，无法检索")
        return self.attn.forward(query, memory.K_V)

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        dq, _, g = self.attn.backward(dout, cache)
        return dq, with_prefix(g, "attn")


def retrieve(query: np.ndarray, memory: VisionMemory, module: Retriever) -> np.ndarray:
    return module.forward(query, memory)[0]
