"""
Adam 优化器
带偏差修正的标准 Adam，权重衰减以 L2 形式加到梯度上
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from tensorcore.tensor import Tensor
from utils.errors import NonFiniteGradientError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Adam 的超参数与一阶/二阶矩，矩按参数名保存"""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, Optional[np.ndarray]],
              state: AdamState) -> AdamState:
    """
    执行一步 Adam 更新（原地修改参数）

    参数:
        params (Mapping[str, Tensor]): 参数名到参数
        grads (Mapping[str, np.ndarray]): 参数名到梯度，缺失视为零梯度
        state (AdamState): 优化器状态，step 加一

    返回:
        AdamState: 更新后的状态（与传入的是同一个对象）

    异常:
        NonFiniteGradientError: 任意梯度含 NaN/Inf，此时参数和状态都不变
    """
    # 先检查全部梯度，保证出错时不会只更新一部分参数
    bad = [name for name, g in grads.items() if g is not None and not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(f"梯度出现非有限值: {', '.join(sorted(bad))}")
    for name, g in grads.items():
        if g is not None and name in params and g.shape != params[name].shape:
            raise ShapeMismatchError(f"{name}: 梯度形状 {g.shape} 与参数 {params[name].shape} 不一致")

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t

    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p.data) if g is None else g.astype(p.dtype, copy=False)
        if state.weight_decay:
            g = g + state.weight_decay * p.data

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m.astype(p.dtype, copy=False)
        state.v[name] = v.astype(p.dtype, copy=False)

        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - state.lr * update).astype(p.dtype, copy=False)
    return state


class Adam:
    """
    绑定到一个模块的 Adam
    把 backward 得到的 GradientMap 换成按参数名索引，再调用 adam_step
    """

    def __init__(self, named_params, lr=1e-4, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params: Dict[str, Tensor] = dict(named_params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def step(self, grad_map) -> None:
        grads = {name: grad_map.get(p) for name, p in self.params.items()}
        adam_step(self.params, grads, self.state)

    def state_arrays(self, prefix: str) -> Dict[str, np.ndarray]:
        """导出一阶/二阶矩，名称形如 <prefix>/m/<参数名>"""
        out = {}
        for name in self.params:
            if name in self.state.m:
                out[f"{prefix}/m/{name}"] = self.state.m[name]
                out[f"{prefix}/v/{name}"] = self.state.v[name]
        return out

    def load_state_arrays(self, prefix: str, arrays: Mapping[str, np.ndarray], step: int) -> None:
        self.state.step = step
        self.state.m.clear()
        self.state.v.clear()
        for name, p in self.params.items():
            m = arrays.get(f"{prefix}/m/{name}")
            v = arrays.get(f"{prefix}/v/{name}")
            if m is not None and v is not None:
                self.state.m[name] = np.array(m, dtype=p.dtype)
                self.state.v[name] = np.array(v, dtype=p.dtype)
