"""
网络层容器
Module/Parameter 以及卷积、归一化、全连接等带参数的层
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from tensorcore import ops
from tensorcore.tensor import Tensor, get_default_dtype
from utils.errors import ShapeMismatchError, UnknownTensorError, CheckpointShapeError

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """可学习参数，默认参与梯度记录"""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)

    def __repr__(self):
        return f"Parameter(shape={self.shape}, dtype={self.dtype})"


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=None) -> np.ndarray:
    """
    Kaiming 均匀初始化，边界 sqrt(6 / fan_in)

    参数:
        rng (np.random.Generator): 随机数生成器
        shape (tuple): 权重形状
        fan_in (int): 输入扇入
        dtype: 精度，默认取全局默认精度

    返回:
        np.ndarray: 初始化后的权重
    """
    dtype = np.dtype(dtype or get_default_dtype())
    bound = np.sqrt(6.0 / max(fan_in, 1))
    # 原地变换，避免大矩阵产生额外副本
    w = rng.random(shape, dtype=dtype)
    w *= 2.0 * bound
    w -= bound
    return w


class Module:
    """
    层的基类
    属性中的 Parameter、子 Module 和 ModuleList 会按定义顺序注册，
    参数名为点号分隔的路径，例如 net_a.ae.enc.0.weight
    """

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = OrderedDict()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # 注册与遍历
    def register_buffer(self, name: str, array: np.ndarray) -> None:
        """注册不参与梯度的状态数组（例如 BatchNorm 的滑动统计量）"""
        self._buffers[name] = array

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in self.__dict__.items():
            if name.startswith("_"):
                continue
            if isinstance(value, Module):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self.__dict__.items():
            if name.startswith("_"):
                continue
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, array in self._buffers.items():
            yield prefix + name, array
        for name, child in self.children():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    # 模式
    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # 状态
    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """参数与缓冲区的名称到数组的映射"""
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data
        for name, array in self.named_buffers():
            state[name] = array
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        载入参数与缓冲区

        参数:
            state (dict): 名称到数组的映射
            strict (bool): 为 True 时要求名称完全一致

        异常:
            UnknownTensorError: state 中存在模型没有的名称
            CheckpointShapeError: 形状不一致，消息中列出所有不一致的张量
        """
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        known = set(params) | set(buffers)

        unknown = sorted(set(state) - known)
        if unknown:
            raise UnknownTensorError(f"未知的张量名: {', '.join(unknown)}")
        missing = sorted(known - set(state))
        if strict and missing:
            raise UnknownTensorError(f"缺少张量: {', '.join(missing)}")

        wrong = []
        for name, array in state.items():
            target = params[name].data if name in params else buffers[name]
            if tuple(array.shape) != target.shape:
                wrong.append(f"{name}: 期望 {target.shape}, 实际 {tuple(array.shape)}")
        if wrong:
            raise CheckpointShapeError("形状不匹配的张量:\n  " + "\n  ".join(wrong))

        for name, array in state.items():
            if name in params:
                params[name].data = np.ascontiguousarray(array, dtype=params[name].dtype)
            else:
                buffers[name][...] = array

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class ModuleList(Module):
    """按序号命名的子模块列表"""

    def __init__(self, modules=()):
        super().__init__()
        self._items: List[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, groups=1,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ShapeMismatchError(f"通道数 {in_channels}/{out_channels} 不能被 groups={groups} 整除")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding, self.groups = stride, padding, groups
        fan_in = in_channels // groups * kernel_size * kernel_size
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class ConvTranspose2d(Module):
    """转置卷积，权重形状 (in, out, k, k)"""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        # 每个输出像素大约接收 in * (k/s)^2 个输入
        fan_in = in_channels * max(kernel_size // stride, 1) ** 2
        shape = (in_channels, out_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features, dtype=get_default_dtype())) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        dtype = get_default_dtype()
        self.momentum, self.eps = momentum, eps
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x):
        return ops.batchnorm2d(
            x, self.weight, self.bias,
            self._buffers["running_mean"], self._buffers["running_var"],
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class LayerNorm(Module):
    """最后一维上的 LayerNorm"""

    def __init__(self, dim, eps=1e-5):
        super().__init__()
        dtype = get_default_dtype()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=dtype))
        self.bias = Parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x):
        return ops.layernorm(x, self.weight, self.bias, self.eps)


class LayerNorm2d(LayerNorm):
    """通道维上的 LayerNorm，输入为 NCHW"""

    def forward(self, x):
        y = ops.layernorm(x.transpose(0, 2, 3, 1), self.weight, self.bias, self.eps)
        return y.transpose(0, 3, 1, 2)
