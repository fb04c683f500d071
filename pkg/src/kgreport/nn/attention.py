"""多头缩放点积注意力（前向 + 反向）

Q = Xq·W_Q, K = Xkv·W_K, V = Xkv·W_V，按头切分后 softmax(QKᵀ/√d_h)·V，拼接后乘 W_O。无偏置。
"""

from typing import Optional, Tuple

import numpy as np

from ..common.errors import EmptyInput, HeadDivisibility, ShapeMismatch
from .base import Grads, Module, glorot_uniform
from .functional import softmax, softmax_backward


class MultiHeadAttention(Module):
    """多头注意力

    参数: W_Q (d_q×D), W_K (d_kv×D), W_V (d_kv×D), W_O (D×D)
    """

    def __init__(self, d_q: int, d_kv: int, d_model: int, heads: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if heads < 1 or d_model % heads != 0:
            raise HeadDivisibility(f"D={d_model} 不能被 heads={heads} 整除")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_q = d_q
        self.d_kv = d_kv
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.params = {
            "W_Q": glorot_uniform(rng, d_q, d_model),
            "W_K": glorot_uniform(rng, d_kv, d_model),
            "W_V": glorot_uniform(rng, d_kv, d_model),
            "W_O": glorot_uniform(rng, d_model, d_model),
        }

    def _split(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        return x.reshape(n, self.heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[1]
        return x.transpose(1, 0, 2).reshape(n, self.d_model)

    def forward(self, Xq: np.ndarray, Xkv: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, dict]:
        """
        Args:
            Xq: nq×d_q 查询
            Xkv: nk×d_kv 键值
            mask: 可选 nq×nk 布尔矩阵，True 表示可见；每行至少一个 True

        Returns:
            (nq×D 输出, cache)；cache["weights"] 为 heads×nq×nk 注意力权重
        """
        if Xq.ndim != 2 or Xq.shape[1] != self.d_q:
            raise ShapeMismatch(f"查询宽度 {Xq.shape} 与 d_q={self.d_q} 不一致")
        if Xkv.ndim != 2 or Xkv.shape[1] != self.d_kv:
            raise ShapeMismatch(f"键值宽度 {Xkv.shape} 与 d_kv={self.d_kv} 不一致")
        if Xkv.shape[0] == 0:
            raise EmptyInput("注意力键值为空")
        p = self.params
        Q = self._split(Xq @ p["W_Q"])
        K = self._split(Xkv @ p["W_K"])
        V = self._split(Xkv @ p["W_V"])
        scale = 1.0 / np.sqrt(self.d_head)
        scores = (Q @ K.transpose(0, 2, 1)) * scale
        if mask is not None:
            if mask.shape != (Xq.shape[0], Xkv.shape[0]):
                raise ShapeMismatch(f"mask 形状 {mask.shape} 与注意力矩阵不一致")
            scores = np.where(mask[None, :, :], scores, -np.inf)
        weights = softmax(scores, axis=-1)
        heads_out = weights @ V
        concat = self._merge(heads_out)
        out = concat @ p["W_O"]
        cache = {"Xq": Xq, "Xkv": Xkv, "Q": Q, "K": K, "V": V, "weights": weights, "concat": concat, "scale": scale}
        return out, cache

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, np.ndarray, Grads]:
        """返回 (dXq, dXkv, grads)；自注意力调用方需把 dXq 与 dXkv 相加"""
        p = self.params
        Xq, Xkv = cache["Xq"], cache["Xkv"]
        Q, K, V, A = cache["Q"], cache["K"], cache["V"], cache["weights"]
        scale = cache["scale"]

        dW_O = cache["concat"].T @ dout
        dheads = self._split(dout @ p["W_O"].T)
        dA = dheads @ V.transpose(0, 2, 1)
        dV = A.transpose(0, 2, 1) @ dheads
        dS = softmax_backward(dA, A) * scale
        dQ = dS @ K
        dK = dS.transpose(0, 2, 1) @ Q

        dQm, dKm, dVm = self._merge(dQ), self._merge(dK), self._merge(dV)
        grads = {
            "W_Q": Xq.T @ dQm,
            "W_K": Xkv.T @ dKm,
            "W_V": Xkv.T @ dVm,
            "W_O": dW_O,
        }
        dXq = dQm @ p["W_Q"].T
        dXkv = dKm @ p["W_K"].T + dVm @ p["W_V"].T
        return dXq, dXkv, grads


def attention(Xq: np.ndarray, Xkv: np.ndarray, module: MultiHeadAttention, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """仅前向的便捷函数"""
    out, _ = module.forward(Xq, Xkv, mask)
    return out
