"""多尺度图特征融合

X_i' = X_i + E_scale[i] + E_pos[:n_i]，各尺度按行拼接后做一次多头自注意力，再按 offsets 切回各尺度。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..common.errors import BadScaleIndex, EmptyGraph, ShapeMismatch, TooManyNodes
from .attention import MultiHeadAttention
from .base import Grads, Module, with_prefix


@dataclass
class FusedScales:
    """融合结果"""
    X: np.ndarray  # N_total×D
    offsets: List[int]
    sizes: List[int]
    final_index: int = -1
    weights: Optional[np.ndarray] = None  # heads×N_total×N_total

    @property
    def per_scale(self) -> List[np.ndarray]:
        return [self.X[o:o + n] for o, n in zip(self.offsets, self.sizes)]

    @property
    def final(self) -> np.ndarray:
        return select_final(self, self.final_index)


def select_final(fused: FusedScales, target_scale_index: int) -> np.ndarray:
    """取出指定尺度的切片（支持负下标）"""
    n_scales = len(fused.sizes)
    if not -n_scales <= target_scale_index < n_scales:
        raise BadScaleIndex(f"尺度下标 {target_scale_index} 超出范围，共 {n_scales} 个尺度")
    i = target_scale_index % n_scales
    return fused.X[fused.offsets[i]:fused.offsets[i] + fused.sizes[i]]


class ScaleFusion(Module):
    """尺度编码 + 位置编码 + 拼接自注意力"""

    def __init__(self, n_scales: int, n_max: int, d: int, heads: int, residual: bool = True,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_scales = n_scales
        self.n_max = n_max
        self.d = d
        self.residual = residual
        self.params = {
            "E_scale": rng.normal(0.0, 0.02, size=(n_scales, d)),
            "E_pos": rng.normal(0.0, 0.02, size=(n_max, d)),
        }
        self.attn = MultiHeadAttention(d, d, d, heads, rng)
        self.children["attn"] = self.attn

    def apply_encodings(self, X: np.ndarray, scale_index: int) -> np.ndarray:
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ShapeMismatch(f"尺度特征形状 {X.shape} 与 D={self.d} 不一致")
        if not 0 <= scale_index < self.n_scales:
            raise BadScaleIndex(f"尺度下标 {scale_index} 超出 [0, {self.n_scales})")
        if X.shape[0] > self.n_max:
            raise TooManyNodes(f"尺度 {scale_index} 节点数 {X.shape[0]} 超过 N_max={self.n_max}")
        return X + self.params["E_scale"][scale_index] + self.params["E_pos"][: X.shape[0]]

    def fuse(self, X_list: Sequence[np.ndarray]) -> Tuple[FusedScales, dict]:
        """对已加编码的各尺度特征做拼接自注意力"""
        sizes = [int(x.shape[0]) for x in X_list]
        for x in X_list:
            if x.ndim != 2 or x.shape[1] != self.d:
                raise ShapeMismatch(f"尺度特征形状 {x.shape} 与 D={self.d} 不一致")
        offsets = list(np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)) if sizes else []
        Xc = np.concatenate(list(X_list), axis=0) if X_list else np.zeros((0, self.d))
        if Xc.shape[0] == 0:
            raise EmptyGraph("所有尺度均没有节点，无法融合")
        out, attn_cache = self.attn.forward(Xc, Xc)
        X2 = Xc + out if self.residual else out
        fused = FusedScales(X=X2, offsets=[int(o) for o in offsets], sizes=sizes, weights=attn_cache["weights"])
        return fused, {"attn": attn_cache, "sizes": sizes, "offsets": fused.offsets}

    def fuse_backward(self, dX2: np.ndarray, cache: dict) -> Tuple[List[np.ndarray], Grads]:
        dXq, dXkv, g = self.attn.backward(dX2, cache["attn"])
        dXc = dXq + dXkv
        if self.residual:
            dXc = dXc + dX2
        parts = [dXc[o:o + n] for o, n in zip(cache["offsets"], cache["sizes"])]
        return parts, with_prefix(g, "attn")

    def forward(self, X_list: Sequence[np.ndarray], final_index: int = -1) -> Tuple[FusedScales, dict]:
        """编码 + 融合"""
        encoded = [self.apply_encodings(x, i) for i, x in enumerate(X_list)]
        fused, cache = self.fuse(encoded)
        fused.final_index = final_index
        select_final(fused, final_index)
        return fused, cache

    def backward(self, dX2: np.ndarray, cache: dict) -> Tuple[List[np.ndarray], Grads]:
        """返回 (各尺度输入梯度, grads)"""
        parts, grads = self.fuse_backward(dX2, cache)
        dE_scale = np.zeros_like(self.params["E_scale"])
        dE_pos = np.zeros_like(self.params["E_pos"])
        for i, dp in enumerate(parts):
            dE_scale[i] = dp.sum(axis=0)
            dE_pos[: dp.shape[0]] += dp
        grads["E_scale"] = dE_scale
        grads["E_pos"] = dE_pos
        return parts, grads

    def final_gradient(self, d_final: np.ndarray, cache: dict, final_index: int = -1) -> np.ndarray:
        """把对最终尺度切片的梯度放回 N_total×D"""
        n_total = sum(cache["sizes"])
        i = final_index % len(cache["sizes"])
        dX2 = np.zeros((n_total, self.d))
        o = cache["offsets"][i]
        dX2[o:o + cache["sizes"][i]] = d_final
        return dX2
