"""中心差分梯度检查"""

from typing import Callable, Dict

import numpy as np

STEP = 1e-5
DENOM_FLOOR = 1e-3


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    """原地扰动 x 的每个坐标，f 无参数且读取 x 的当前值"""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        fp = f()
        x[idx] = old - step
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DENOM_FLOOR) -> float:
    """max |a - n| / max(|a|, |n|, floor)"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(
    loss_fn: Callable[[], float],
    tensors: Dict[str, np.ndarray],
    analytic: Dict[str, np.ndarray],
    step: float = STEP,
) -> Dict[str, float]:
    """逐张量比较解析梯度与数值梯度

    Args:
        loss_fn: 读取 tensors 当前值并返回标量损失
        tensors: 需要检查的张量（会被临时原地修改）
        analytic: 与 tensors 同名的解析梯度

    Returns:
        {name: 最大相对误差}
    """
    errors = {}
    for name, x in tensors.items():
        numeric = numerical_gradient(loss_fn, x, step)
        errors[name] = relative_error(analytic[name], numeric)
    return errors


def projected_loss(out: np.ndarray, R: np.ndarray) -> float:
    """sum(out * R)，其梯度为 R"""
    return float(np.sum(out * R))
