"""图编码器：RGCN / GCN / GAT 层及其反向传播

消息方向为 head -> tail（尾节点聚合入边），RGCN/GCN 按入度均值归一化。
邻接矩阵用 scipy.sparse 保存，同一张图在训练中只构造一次。
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..common.errors import IndexOutOfRange, ShapeMismatch
from ..kg.models import N_RELATIONS
from .base import Grads, Module, glorot_uniform, with_prefix
from .functional import activate, activate_backward, leaky_relu, leaky_relu_backward, softmax, softmax_backward

VARIANTS = ("rgcn", "gcn", "gat")


@dataclass
class GraphEncoderConfig:
    """图编码器配置"""
    variant: str = "rgcn"
    layers: int = 2
    d_in: int = 64
    d_hidden: int = 64
    d_out: Optional[int] = None  # 默认等于 d_hidden
    add_inverse_relations: bool = False
    final_activation: bool = False
    seed: int = 42

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"未知图编码器: {self.variant}，可选 {VARIANTS}")
        if self.layers < 1:
            raise ValueError(f"layers 必须 >= 1: {self.layers}")
        if self.d_out is None:
            self.d_out = self.d_hidden

    @property
    def n_relations(self) -> int:
        return 2 * N_RELATIONS if self.add_inverse_relations else N_RELATIONS

    def layer_dims(self) -> List[Tuple[int, int]]:
        dims = [self.d_in] + [self.d_hidden] * (self.layers - 1) + [self.d_out]
        return list(zip(dims[:-1], dims[1:]))

    def activation(self, layer: int) -> str:
        if layer < self.layers - 1 or self.final_activation:
            return "relu"
        return "identity"


class GraphStructure:
    """预处理后的图结构（按关系的归一化邻接、合并邻接、GAT 掩码）"""

    def __init__(self, n: int, edge_index: np.ndarray, edge_type: np.ndarray, n_relations: int = N_RELATIONS):
        edge_index = np.asarray(edge_index, dtype=np.int64).reshape(2, -1)
        edge_type = np.asarray(edge_type, dtype=np.int64).reshape(-1)
        if edge_index.shape[1] != edge_type.shape[0]:
            raise ShapeMismatch(f"edge_index 列数 {edge_index.shape[1]} 与 edge_type 长度 {edge_type.shape[0]} 不一致")
        if edge_index.size and (edge_index.min() < 0 or edge_index.max() >= n):
            raise IndexOutOfRange(f"edge_index 超出节点范围 [0, {n})")
        if edge_type.size and (edge_type.min() < 0 or edge_type.max() >= n_relations):
            raise IndexOutOfRange(f"edge_type 超出关系范围 [0, {n_relations})")
        self.n = int(n)
        self.n_relations = int(n_relations)
        self.edge_index = edge_index
        self.edge_type = edge_type
        heads, tails = edge_index[0], edge_index[1]
        self.rel_adj = [self._mean_adjacency(heads[edge_type == r], tails[edge_type == r]) for r in range(n_relations)]
        self.all_adj = self._mean_adjacency(heads, tails)
        # GAT 邻域：入邻居 ∪ 自身（集合语义）
        mask = np.eye(self.n, dtype=bool)
        mask[tails, heads] = True
        self.gat_mask = mask

    def _mean_adjacency(self, heads: np.ndarray, tails: np.ndarray) -> sparse.csr_matrix:
        """A[i, j] = (j->i 边数) / (i 的入边数)"""
        n = self.n
        if heads.size == 0:
            return sparse.csr_matrix((n, n), dtype=np.float64)
        indeg = np.bincount(tails, minlength=n).astype(np.float64)
        data = 1.0 / indeg[tails]
        return sparse.csr_matrix((data, (tails, heads)), shape=(n, n))

    @classmethod
    def from_edges(
        cls, n: int, edge_index: np.ndarray, edge_type: np.ndarray, add_inverse_relations: bool = False
    ) -> "GraphStructure":
        edge_index = np.asarray(edge_index, dtype=np.int64).reshape(2, -1)
        edge_type = np.asarray(edge_type, dtype=np.int64).reshape(-1)
        if not add_inverse_relations:
            return cls(n, edge_index, edge_type, N_RELATIONS)
        inv_index = edge_index[::-1]
        return cls(
            n,
            np.concatenate([edge_index, inv_index], axis=1),
            np.concatenate([edge_type, edge_type + N_RELATIONS]),
            2 * N_RELATIONS,
        )


def _check_input(V: np.ndarray, d_in: int, structure: GraphStructure) -> None:
    if V.ndim != 2 or V.shape[1] != d_in:
        raise ShapeMismatch(f"节点特征形状 {V.shape} 与 d_in={d_in} 不一致")
    if V.shape[0] != structure.n:
        raise ShapeMismatch(f"节点特征行数 {V.shape[0]} 与图节点数 {structure.n} 不一致")


class RgcnLayer(Module):
    """h_i' = σ(Σ_r Σ_{j∈N_i^r} W_r h_j / c_{i,r} + W_0 h_i)"""

    def __init__(self, d_in: int, d_out: int, n_relations: int = N_RELATIONS, activation: str = "relu",
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out, self.n_relations, self.activation = d_in, d_out, n_relations, activation
        for r in range(n_relations):
            self.params[f"W_r{r}"] = glorot_uniform(rng, d_in, d_out)
        self.params["W_0"] = glorot_uniform(rng, d_in, d_out)

    def forward(self, V: np.ndarray, structure: GraphStructure):
        _check_input(V, self.d_in, structure)
        messages = [structure.rel_adj[r] @ V for r in range(self.n_relations)]
        pre = V @ self.params["W_0"]
        for r, M in enumerate(messages):
            pre = pre + M @ self.params[f"W_r{r}"]
        return activate(pre, self.activation), {"V": V, "messages": messages, "pre": pre, "structure": structure}

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        dpre = activate_backward(dout, cache["pre"], self.activation)
        V, structure = cache["V"], cache["structure"]
        grads = {"W_0": V.T @ dpre}
        dV = dpre @ self.params["W_0"].T
        for r, M in enumerate(cache["messages"]):
            W = self.params[f"W_r{r}"]
            grads[f"W_r{r}"] = M.T @ dpre
            dV = dV + structure.rel_adj[r].T @ (dpre @ W.T)
        return dV, grads


class GcnLayer(Module):
    """关系无关版本：所有边共享 W，按总入度归一化，加 W_0 自环"""

    def __init__(self, d_in: int, d_out: int, activation: str = "relu", rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out, self.activation = d_in, d_out, activation
        self.params["W"] = glorot_uniform(rng, d_in, d_out)
        self.params["W_0"] = glorot_uniform(rng, d_in, d_out)

    def forward(self, V: np.ndarray, structure: GraphStructure):
        _check_input(V, self.d_in, structure)
        M = structure.all_adj @ V
        pre = M @ self.params["W"] + V @ self.params["W_0"]
        return activate(pre, self.activation), {"V": V, "M": M, "pre": pre, "structure": structure}

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        dpre = activate_backward(dout, cache["pre"], self.activation)
        V, M = cache["V"], cache["M"]
        grads = {"W": M.T @ dpre, "W_0": V.T @ dpre}
        dV = dpre @ self.params["W_0"].T + cache["structure"].all_adj.T @ (dpre @ self.params["W"].T)
        return dV, grads


class GatLayer(Module):
    """单头加性注意力

    z = V·W；e_ij = leaky_relu(z_j·a[:d] + z_i·a[d:], 0.25)，j ∈ 入邻居 ∪ {i}；h_i' = σ(Σ_j α_ij z_j)
    """

    def __init__(self, d_in: int, d_out: int, activation: str = "relu", rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out, self.activation = d_in, d_out, activation
        self.params["W"] = glorot_uniform(rng, d_in, d_out)
        s = np.sqrt(6.0 / (2 * d_out + 1))
        self.params["gat.a"] = rng.uniform(-s, s, size=2 * d_out)

    def forward(self, V: np.ndarray, structure: GraphStructure):
        _check_input(V, self.d_in, structure)
        a = self.params["gat.a"]
        Z = V @ self.params["W"]
        src = Z @ a[: self.d_out]
        dst = Z @ a[self.d_out:]
        E = dst[:, None] + src[None, :]
        L = leaky_relu(E)
        alpha = softmax(np.where(structure.gat_mask, L, -np.inf), axis=1) if structure.n else np.zeros((0, 0))
        pre = alpha @ Z
        cache = {"V": V, "Z": Z, "E": E, "alpha": alpha, "pre": pre}
        return activate(pre, self.activation), cache

    def backward(self, dout: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        d = self.d_out
        a = self.params["gat.a"]
        V, Z, E, alpha = cache["V"], cache["Z"], cache["E"], cache["alpha"]
        dpre = activate_backward(dout, cache["pre"], self.activation)
        dalpha = dpre @ Z.T
        dZ = alpha.T @ dpre
        dE = leaky_relu_backward(softmax_backward(dalpha, alpha, axis=1), E)
        dsrc = dE.sum(axis=0)
        ddst = dE.sum(axis=1)
        dZ = dZ + np.outer(dsrc, a[:d]) + np.outer(ddst, a[d:])
        grads = {
            "W": V.T @ dZ,
            "gat.a": np.concatenate([Z.T @ dsrc, Z.T @ ddst]),
        }
        return dZ @ self.params["W"].T, grads


def make_layer(variant: str, d_in: int, d_out: int, n_relations: int, activation: str,
               rng: np.random.Generator) -> Module:
    if variant == "rgcn":
        return RgcnLayer(d_in, d_out, n_relations, activation, rng)
    if variant == "gcn":
        return GcnLayer(d_in, d_out, activation, rng)
    if variant == "gat":
        return GatLayer(d_in, d_out, activation, rng)
    raise ValueError(f"未知图编码器: {variant}")


class GraphEncoder(Module):
    """多层图编码器，检查点名为 layer{L}.<参数名>"""

    def __init__(self, config: GraphEncoderConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.layers: List[Module] = []
        for i, (d_in, d_out) in enumerate(config.layer_dims()):
            layer = make_layer(config.variant, d_in, d_out, config.n_relations, config.activation(i), rng)
            self.layers.append(layer)
            self.children[f"layer{i}"] = layer

    def structure(self, n: int, edge_index: np.ndarray, edge_type: np.ndarray) -> GraphStructure:
        return GraphStructure.from_edges(n, edge_index, edge_type, self.config.add_inverse_relations)

    def forward(self, V: np.ndarray, structure: GraphStructure):
        caches = []
        h = V
        for layer in self.layers:
            h, cache = layer.forward(h, structure)
            caches.append(cache)
        return h, caches

    def backward(self, dout: np.ndarray, caches: Sequence[dict]) -> Tuple[np.ndarray, Grads]:
        grads: Grads = {}
        dh = dout
        for i in reversed(range(len(self.layers))):
            dh, g = self.layers[i].backward(dh, caches[i])
            grads.update(with_prefix(g, f"layer{i}"))
        return dh, grads


# ---- 函数式接口 ----

def _layer_from_params(cls, params: Dict[str, np.ndarray], activation: str, **kwargs) -> Module:
    layer = cls.__new__(cls)
    Module.__init__(layer)
    layer.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    layer.activation = activation
    for key, value in kwargs.items():
        setattr(layer, key, value)
    return layer


def rgcn_layer(V, edge_index, edge_type, params: Dict[str, np.ndarray], activation: str = "relu") -> np.ndarray:
    """单层 RGCN；params 含 W_r0..W_r{R-1} 与 W_0"""
    n_rel = sum(1 for k in params if k.startswith("W_r"))
    d_in, d_out = params["W_0"].shape
    layer = _layer_from_params(RgcnLayer, params, activation, d_in=d_in, d_out=d_out, n_relations=n_rel)
    structure = GraphStructure(np.asarray(V).shape[0], edge_index, edge_type, n_rel)
    return layer.forward(np.asarray(V, dtype=np.float64), structure)[0]


def rgcn_forward(V, edge_index, edge_type, config: GraphEncoderConfig,
                 params_per_layer: Sequence[Dict[str, np.ndarray]]) -> np.ndarray:
    """逐层应用 RGCN，最后一层是否激活由 config.final_activation 决定"""
    h = np.asarray(V, dtype=np.float64)
    n_rel = config.n_relations
    structure = GraphStructure.from_edges(h.shape[0], edge_index, edge_type, config.add_inverse_relations)
    for i, params in enumerate(params_per_layer):
        d_in, d_out = params["W_0"].shape
        if h.shape[1] != d_in:
            raise ShapeMismatch(f"第 {i} 层输入宽度 {h.shape[1]} 与 W_0 {params['W_0'].shape} 不一致")
        layer = _layer_from_params(RgcnLayer, params, config.activation(i), d_in=d_in, d_out=d_out, n_relations=n_rel)
        h = layer.forward(h, structure)[0]
    return h


def gcn_layer(V, edge_index, params: Dict[str, np.ndarray], activation: str = "relu") -> np.ndarray:
    """单层 GCN；params 含 W 与 W_0"""
    d_in, d_out = params["W_0"].shape
    layer = _layer_from_params(GcnLayer, params, activation, d_in=d_in, d_out=d_out)
    edge_index = np.asarray(edge_index, dtype=np.int64).reshape(2, -1)
    structure = GraphStructure(np.asarray(V).shape[0], edge_index, np.zeros(edge_index.shape[1], dtype=np.int64))
    return layer.forward(np.asarray(V, dtype=np.float64), structure)[0]


def gat_layer(V, edge_index, params: Dict[str, np.ndarray], activation: str = "relu") -> np.ndarray:
    """单层 GAT；params 含 W 与 gat.a（长度 2·d_out）"""
    d_in, d_out = params["W"].shape
    if np.asarray(params["gat.a"]).shape != (2 * d_out,):
        raise ShapeMismatch(f"gat.a 长度必须为 2·d_out={2 * d_out}")
    layer = _layer_from_params(GatLayer, params, activation, d_in=d_in, d_out=d_out)
    edge_index = np.asarray(edge_index, dtype=np.int64).reshape(2, -1)
    structure = GraphStructure(np.asarray(V).shape[0], edge_index, np.zeros(edge_index.shape[1], dtype=np.int64))
    return layer.forward(np.asarray(V, dtype=np.float64), structure)[0]
