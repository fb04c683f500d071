"""知识图谱与视觉的双向交叉注意力，以及前缀矩阵 F 的组装

段顺序固定为 (v, kv, kg2v, v2kg)；被关闭的流不占行，span 长度为 0。
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..common.errors import EmptyGraph, EmptyInput, ShapeMismatch
from .attention import MultiHeadAttention
from .base import Grads, Module, glorot_uniform, with_prefix

SEGMENTS = ("v", "kv", "kg2v", "v2kg")


@dataclass
class PrefixMatrix:
    """前缀矩阵 F 及各段的行区间 [start, stop)"""
    F: np.ndarray
    spans: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    @property
    def n_f(self) -> int:
        return int(self.F.shape[0])

    def segment(self, name: str) -> np.ndarray:
        start, stop = self.spans[name]
        return self.F[start:stop]

    def span_sizes(self) -> Dict[str, int]:
        return {k: b - a for k, (a, b) in self.spans.items()}


class CrossModalBridge(Module):
    """KG2V / V2KG 交叉注意力 + 各流投影到解码器宽度"""

    def __init__(self, d: int, d_dec: int, heads: int, tie_projections: bool = False,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.d_dec = d_dec
        self.tie_projections = tie_projections
        self.kg2v_attn = MultiHeadAttention(d, d, d, heads, rng)
        self.v2kg_attn = MultiHeadAttention(d, d, d, heads, rng)
        self.children["kg2v.attn"] = self.kg2v_attn
        self.children["v2kg.attn"] = self.v2kg_attn
        if tie_projections:
            self.params["proj"] = glorot_uniform(rng, d, d_dec)
        else:
            for name in SEGMENTS:
                self.params[f"proj_{name}"] = glorot_uniform(rng, d, d_dec)

    def projection_name(self, segment: str) -> str:
        return "proj" if self.tie_projections else f"proj_{segment}"

    def _check(self, X: np.ndarray, what: str) -> None:
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ShapeMismatch(f"{what} 形状 {X.shape} 与 D={self.d} 不一致")

    def kg2v(self, F_v: np.ndarray, X_final: np.ndarray) -> Tuple[np.ndarray, dict]:
        """查询 = 视觉 patch，键值 = 最终尺度图节点"""
        self._check(F_v, "F_v")
        self._check(X_final, "X_final")
        if X_final.shape[0] == 0:
            raise EmptyGraph("最终尺度图没有节点")
        return self.kg2v_attn.forward(F_v, X_final)

    def v2kg(self, X_final: np.ndarray, F_v: np.ndarray) -> Tuple[np.ndarray, dict]:
        """查询 = 图节点，键值 = 视觉 patch"""
        self._check(F_v, "F_v")
        self._check(X_final, "X_final")
        if X_final.shape[0] == 0:
            raise EmptyGraph("最终尺度图没有节点")
        if F_v.shape[0] == 0:
            raise EmptyInput("F_v 为空")
        return self.v2kg_attn.forward(X_final, F_v)

    def kg2v_backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, np.ndarray, Grads]:
        """返回 (dF_v, dX_final, grads)"""
        dq, dkv, g = self.kg2v_attn.backward(dout, cache)
        return dq, dkv, with_prefix(g, "kg2v.attn")

    def v2kg_backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, np.ndarray, Grads]:
        """返回 (dX_final, dF_v, grads)"""
        dq, dkv, g = self.v2kg_attn.backward(dout, cache)
        return dq, dkv, with_prefix(g, "v2kg.attn")

    def assemble_prefix(self, streams: Dict[str, Optional[np.ndarray]]) -> Tuple[PrefixMatrix, dict]:
        """按固定顺序投影并拼接各流；缺失或为 None 的流不占行"""
        blocks = []
        spans: Dict[str, Tuple[int, int]] = {}
        row = 0
        for name in SEGMENTS:
            X = streams.get(name)
            if X is None:
                spans[name] = (row, row)
                continue
            self._check(X, name)
            blocks.append(X @ self.params[self.projection_name(name)])
            spans[name] = (row, row + X.shape[0])
            row += X.shape[0]
        F = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, self.d_dec))
        return PrefixMatrix(F=F, spans=spans), {"streams": dict(streams), "spans": spans}

    def assemble_backward(self, dF: np.ndarray, cache: dict) -> Tuple[Dict[str, np.ndarray], Grads]:
        """返回 (各流梯度, 投影矩阵梯度)"""
        grads: Grads = {}
        dstreams: Dict[str, np.ndarray] = {}
        for name in SEGMENTS:
            X = cache["streams"].get(name)
            if X is None:
                continue
            start, stop = cache["spans"][name]
            dseg = dF[start:stop]
            pname = self.projection_name(name)
            g = X.T @ dseg
            grads[pname] = grads[pname] + g if pname in grads else g
            dstreams[name] = dseg @ self.params[pname].T
        return dstreams, grads


def assemble_prefix(F_v, F_kv, F_kg2v, F_v2kg, bridge: CrossModalBridge) -> PrefixMatrix:
    """函数式接口；传 None 表示该流被关闭"""
    prefix, _ = bridge.assemble_prefix({"v": F_v, "kv": F_kv, "kg2v": F_kg2v, "v2kg": F_v2kg})
    return prefix
