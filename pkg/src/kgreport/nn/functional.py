"""数值基础运算（双精度）"""

import numpy as np
from scipy.special import log_softmax as _log_softmax
from scipy.special import softmax as _softmax

LEAKY_SLOPE = 0.25
LN_EPS = 1e-5


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return _softmax(x, axis=axis)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return _log_softmax(x, axis=axis)


def softmax_backward(dp: np.ndarray, p: np.ndarray, axis: int = -1) -> np.ndarray:
    """p = softmax(s) 时由 dL/dp 求 dL/ds"""
    return p * (dp - np.sum(dp * p, axis=axis, keepdims=True))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, pre: np.ndarray) -> np.ndarray:
    return dout * (pre > 0)


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(dout: np.ndarray, pre: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return dout * np.where(pre > 0, 1.0, slope)


def activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return relu(x)
    if activation == "identity":
        return x
    raise ValueError(f"未知激活函数: {activation}")


def activate_backward(dout: np.ndarray, pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return relu_backward(dout, pre)
    if activation == "identity":
        return dout
    raise ValueError(f"未知激活函数: {activation}")


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS):
    """逐行 LayerNorm，返回 (输出, cache)"""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def layer_norm_backward(dout: np.ndarray, gain: np.ndarray, cache):
    """返回 (dx, dgain, dbias)"""
    xhat, inv = cache
    dgain = np.sum(dout * xhat, axis=0)
    dbias = np.sum(dout, axis=0)
    dxhat = dout * gain
    d = xhat.shape[-1]
    dx = inv / d * (
        d * dxhat
        - np.sum(dxhat, axis=-1, keepdims=True)
        - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dgain, dbias
