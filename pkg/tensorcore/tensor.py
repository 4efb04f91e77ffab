"""
张量与梯度记录带
提供 Tensor、Function 基类、线程局部的 Tape 以及反向传播入口
"""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import (
    DisconnectedGraphError,
    DTypeMismatchError,
    NonScalarLossError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

# 默认精度：训练和推理用 float32，梯度检查时切换到 float64
_FLOAT32 = np.dtype(np.float32)
_SUPPORTED_DTYPES = (_FLOAT32, np.dtype(np.float64))

# 默认精度、梯度开关和记录带都按线程隔离
_state = threading.local()


def get_default_dtype() -> np.dtype:
    """获取当前线程的默认精度"""
    return getattr(_state, "default_dtype", _FLOAT32)


def set_default_dtype(dtype) -> None:
    """
    设置当前线程的默认精度，其他线程不受影响

    参数:
        dtype: np.float32 或 np.float64
    """
    dtype = np.dtype(dtype)
    if dtype not in _SUPPORTED_DTYPES:
        raise DTypeMismatchError(f"不支持的精度: {dtype}")
    _state.default_dtype = dtype


@contextmanager
def default_dtype(dtype):
    """临时切换默认精度的上下文"""
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """关闭梯度记录（推理时使用）"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Node:
    """记录带上的一个节点：一次前向运算及其输入输出"""

    __slots__ = ("index", "generation", "fn", "inputs", "output")

    def __init__(self, index, generation, fn, inputs, output):
        self.index = index
        self.generation = generation
        self.fn = fn
        self.inputs = inputs
        self.output = output


class Tape:
    """
    梯度记录带
    节点按前向执行顺序追加，反向传播时逆序访问每个节点一次
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.generation = 0

    def record(self, fn, inputs, output) -> Node:
        node = Node(len(self.nodes), self.generation, fn, inputs, output)
        self.nodes.append(node)
        return node

    def owns(self, node: Optional[Node]) -> bool:
        return node is not None and node.generation == self.generation

    def clear(self) -> None:
        """清空记录带，旧节点全部失效"""
        self.nodes = []
        self.generation += 1

    def __len__(self):
        return len(self.nodes)


def get_tape() -> Tape:
    """获取当前线程的记录带"""
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


class Tensor:
    """
    N 维张量
    data 是连续的 numpy 数组；参与记录带的张量通过 grad_id 关联到节点
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        dtype = np.dtype(dtype) if dtype is not None else None
        if isinstance(data, np.ndarray):
            arr = data if dtype is None or data.dtype == dtype else data.astype(dtype)
            if arr.dtype not in _SUPPORTED_DTYPES:
                arr = arr.astype(get_default_dtype())
        else:
            arr = np.asarray(data, dtype=dtype or get_default_dtype())
        # 0 维数组保持 0 维，标量损失的形状是 ()
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # 基本属性
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad_id(self) -> Optional[int]:
        """所在记录带节点的编号；叶子或已脱离记录带时为 None"""
        tape = get_tape()
        if tape.owns(self._node):
            return self._node.index
        return None

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        """取出单元素张量的值"""
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() 只适用于单元素张量，实际形状: {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """返回脱离记录带的副本，永远不会收到梯度"""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # 运算符重载，具体实现在 ops 模块
    def __add__(self, other):
        from tensorcore import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from tensorcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from tensorcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from tensorcore import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from tensorcore import ops
        if isinstance(other, Tensor):
            raise TypeError("只支持除以标量")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from tensorcore import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from tensorcore import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from tensorcore import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from tensorcore import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from tensorcore import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from tensorcore import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from tensorcore import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        from tensorcore import ops
        return ops.exp(self)


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """把常量包装成不需要梯度的张量，精度跟随 like"""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False)


class Function:
    """
    可微运算基类
    子类实现 forward(*arrays, **kwargs) 和 backward(grad)，
    backward 返回与输入一一对应的梯度（不需要时为 None）
    """

    @classmethod
    def apply(cls, *inputs: Any, **kwargs: Any) -> Tensor:
        tensors = [t for t in inputs if isinstance(t, Tensor)]
        like = tensors[0] if tensors else None
        tensors = [as_tensor(t, like) for t in inputs]

        dtypes = {t.dtype for t in tensors}
        if len(dtypes) > 1:
            raise DTypeMismatchError(
                f"{cls.__name__}: 输入精度不一致 {sorted(str(d) for d in dtypes)}"
            )

        fn = cls()
        out_data = fn.forward(*(t.data for t in tensors), **kwargs)
        needs_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=needs_grad)
        if needs_grad:
            out._node = get_tape().record(fn, tuple(tensors), out)
        return out

    def forward(self, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """把广播后的梯度按原形状求和还原"""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class GradientMap(dict):
    """反向传播结果：叶子张量 -> 梯度数组"""

    def of(self, tensor: Tensor) -> np.ndarray:
        """获取梯度，不可达的张量返回全零"""
        grad = self.get(tensor)
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> GradientMap:
    """
    从标量损失开始反向传播

    参数:
        loss (Tensor): 标量损失，必须连接到当前记录带
        params (Iterable[Tensor]): 可选，需要保证有梯度的参数；不可达参数得到全零梯度

    返回:
        GradientMap: 本次反向传播得到的叶子梯度
    """
    if loss.size != 1:
        raise NonScalarLossError(f"损失必须是标量，实际形状: {loss.shape}")

    tape = get_tape()
    result = GradientMap()

    if loss.is_leaf:
        if not loss.requires_grad:
            raise DisconnectedGraphError("损失没有连接到记录带")
        result[loss] = np.ones_like(loss.data)
    else:
        if not tape.owns(loss._node):
            raise DisconnectedGraphError("损失所在的记录带已经被消费或属于其他线程")

        pending: Dict[int, np.ndarray] = {loss._node.index: np.ones_like(loss.data)}
        for node in reversed(tape.nodes[: loss._node.index + 1]):
            grad = pending.pop(node.index, None)
            if grad is None:
                continue
            input_grads = node.fn.backward(grad)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if tape.owns(tensor._node):
                    key = tensor._node.index
                    pending[key] = pending[key] + g if key in pending else g
                elif tensor.is_leaf:
                    result[tensor] = result[tensor] + g if tensor in result else g
        tape.clear()

    for tensor, grad in result.items():
        grad = np.asarray(grad, dtype=tensor.dtype).reshape(tensor.shape)
        result[tensor] = grad
        tensor.grad = grad if tensor.grad is None else tensor.grad + grad

    if params is not None:
        for p in params:
            if p not in result:
                result[p] = np.zeros_like(p.data)
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
    return result
