"""
梯度检查工具
用中心差分验证反向传播得到的解析梯度
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from tensorcore.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5,
                       indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    中心差分数值梯度

    参数:
        fn: 无参闭包，每次调用重新计算标量损失
        tensor (Tensor): 被扰动的张量（原地修改后还原）
        h (float): 差分步长
        indices: 只计算这些扁平下标，其余位置为 0

    返回:
        np.ndarray: 与 tensor 同形状的数值梯度
    """
    flat = tensor.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    positions = range(flat.size) if indices is None else indices
    with no_grad():
        for i in positions:
            original = flat[i]
            flat[i] = original + h
            plus = fn().item()
            flat[i] = original - h
            minus = fn().item()
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(tensor.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max|a - n| / max(|a|∞, |n|∞, floor)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                    sample: Optional[int] = None, seed: int = 0) -> float:
    """
    对一组张量做梯度检查，返回所有张量中最大的相对误差

    参数:
        fn: 无参闭包，返回标量损失
        tensors: 需要检查的张量（requires_grad=True）
        sample (int): 每个张量最多抽查的元素个数，None 表示全部
        seed (int): 抽样用的随机种子
    """
    grads = backward(fn(), params=tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor in tensors:
        analytic = grads.of(tensor).reshape(-1)
        if sample is not None and tensor.size > sample:
            idx = np.sort(rng.choice(tensor.size, size=sample, replace=False))
        else:
            idx = np.arange(tensor.size)
        numeric = numerical_gradient(fn, tensor, h, indices=idx).reshape(-1)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric[idx]).max(initial=0.0), 1e-8)
        err = float(np.abs(analytic[idx] - numeric[idx]).max(initial=0.0) / scale)
        logger.debug("梯度检查 shape=%s 相对误差=%.3e", tensor.shape, err)
        worst = max(worst, err)
    return worst
