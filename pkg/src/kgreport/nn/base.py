"""参数容器基类

约定：
    forward(...) -> (输出, cache)
    backward(d输出, cache) -> (d输入..., grads)，grads 的键与 named_parameters() 的名字一致
"""

from typing import Dict, Iterator, Tuple

import numpy as np

Grads = Dict[str, np.ndarray]


class Module:
    """持有命名参数的层；子模块名以 "." 连接形成检查点张量名"""

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.children: Dict[str, "Module"] = {}

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self.params.items():
            yield prefix + name, value
        for child_name, child in self.children.items():
            yield from child.named_parameters(prefix + child_name + ".")

    def parameters(self) -> Dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def zero_grads(self) -> Grads:
        return {name: np.zeros_like(value) for name, value in self.named_parameters()}

    def load_parameters(self, tensors: Dict[str, np.ndarray], prefix: str = "") -> None:
        """按名字原地覆盖参数（形状必须一致）"""
        from ..common.errors import CheckpointError

        for name, value in self.named_parameters(prefix):
            if name not in tensors:
                raise CheckpointError(f"检查点缺少张量: {name}")
            src = np.asarray(tensors[name])
            if src.shape != value.shape:
                raise CheckpointError(f"张量 {name} 形状 {src.shape} 与模型 {value.shape} 不一致")
            value[...] = src

    def n_parameters(self) -> int:
        return int(sum(v.size for _, v in self.named_parameters()))


def with_prefix(grads: Grads, prefix: str) -> Grads:
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def accumulate(total: Grads, grads: Grads) -> Grads:
    """把 grads 累加进 total（原地）"""
    for name, g in grads.items():
        if name in total:
            total[name] += g
        else:
            total[name] = g.copy()
    return total


def glorot_uniform(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    """uniform(-s, s)，s = sqrt(6 / (d_in + d_out))"""
    s = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-s, s, size=(d_in, d_out))
