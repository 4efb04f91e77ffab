"""
可微算子
所有前向运算都以 Function 子类实现，卷积使用 im2col + 矩阵乘法
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensorcore.tensor import Function, Tensor, as_tensor
from utils.errors import (
    DegenerateVarianceError,
    DegenerateWindowError,
    LabelRangeError,
    ShapeMismatchError,
    ZeroSizeOutputError,
)

logger = logging.getLogger(__name__)

_GELU_C = np.sqrt(2.0 / np.pi)


# ---------------------------------------------------------------------------
# 逐元素运算
# ---------------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return (self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1]))


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return (self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(-grad, self.shapes[1]))


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            self.unbroadcast(grad * self.b, self.a.shape),
            self.unbroadcast(grad * self.a, self.b.shape),
        )


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Exp(Function):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, grad):
        return (grad * self.y,)


class Sigmoid(Function):
    def forward(self, x):
        # exp(-log(1+exp(-x))) 在两端都不会溢出
        self.y = np.exp(-np.logaddexp(0.0, -x)).astype(x.dtype, copy=False)
        return self.y

    def backward(self, grad):
        return (grad * self.y * (1.0 - self.y),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.mask,)


class LeakyReLU(Function):
    def forward(self, x, slope=0.01):
        self.scale = np.where(x > 0, 1.0, slope).astype(x.dtype, copy=False)
        return x * self.scale

    def backward(self, grad):
        return (grad * self.scale,)


class GELU(Function):
    """tanh 近似的 GELU"""

    def forward(self, x):
        self.x = x
        u = _GELU_C * (x + 0.044715 * x ** 3)
        self.t = np.tanh(u)
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad):
        x, t = self.x, self.t
        du = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du
        return (grad * dy,)


# ---------------------------------------------------------------------------
# 形状与归约
# ---------------------------------------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeMismatchError(f"matmul: {a.shape} 与 {b.shape} 不匹配")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return (self.unbroadcast(ga, self.a.shape), self.unbroadcast(gb, self.b.shape))


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
            axes = sorted(a % len(self.shape) for a in axes)
            for a in axes:
                grad = np.expand_dims(grad, a)
        return (np.ascontiguousarray(np.broadcast_to(grad, self.shape)),)


class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
        return np.ascontiguousarray(x.transpose(self.axes))

    def backward(self, grad):
        inverse = np.argsort(self.axes)
        return (np.ascontiguousarray(grad.transpose(inverse)),)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(None))) or i is Ellipsis for i in items)


class GetItem(Function):
    def forward(self, x, index=None):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return np.ascontiguousarray(x[index])

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=self.dtype)
        if _is_basic_index(self.index):
            full[self.index] = grad
        else:
            np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *xs, axis=0):
        self.axis = axis
        self.sizes = [x.shape[axis] for x in xs]
        return np.concatenate(xs, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.ascontiguousarray(g) for g in np.split(grad, cuts, axis=self.axis))


class Pad(Function):
    """常数零填充"""

    def forward(self, x, pad_width=()):
        self.slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, x.shape))
        return np.pad(x, pad_width)

    def backward(self, grad):
        return (np.ascontiguousarray(grad[self.slices]),)


class Roll(Function):
    """循环移位"""

    def forward(self, x, shift=(), axis=()):
        self.shift, self.axis = shift, axis
        return np.roll(x, shift, axis)

    def backward(self, grad):
        return (np.roll(grad, tuple(-s for s in self.shift), self.axis),)


class Take(Function):
    """按整数索引在第 0 维取行（相对位置偏置表查表）"""

    def forward(self, table, indices=None):
        self.shape, self.dtype, self.indices = table.shape, table.dtype, indices
        return table[indices]

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(full, self.indices, grad)
        return (full,)


# ---------------------------------------------------------------------------
# 网络层算子
# ---------------------------------------------------------------------------

class Linear(Function):
    def forward(self, x, w, b):
        if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
            raise ShapeMismatchError(
                f"linear: 输入 {x.shape} 与权重 {w.shape} / 偏置 {b.shape} 不匹配"
            )
        self.x, self.w = x, w
        return np.matmul(x, w.T) + b

    def backward(self, grad):
        g2 = grad.reshape(-1, grad.shape[-1])
        x2 = self.x.reshape(-1, self.x.shape[-1])
        return (np.matmul(grad, self.w), np.matmul(g2.T, x2), g2.sum(axis=0))


class Softmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=axis, keepdims=True)
        return self.y

    def backward(self, grad):
        y = self.y
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class CrossEntropy(Function):
    """log-softmax 与负对数似然融合，返回批均值"""

    def forward(self, logits, labels=None):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if logits.ndim != 2 or labels.shape[0] != logits.shape[0]:
            raise ShapeMismatchError(f"cross_entropy: logits {logits.shape} 与标签 {labels.shape} 不匹配")
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise LabelRangeError(f"标签越界: 取值必须在 [0, {logits.shape[1]}) 内")
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_p = shifted - log_z
        self.p = np.exp(log_p)
        self.labels = labels
        rows = np.arange(labels.shape[0])
        return np.asarray(-log_p[rows, labels].mean(), dtype=logits.dtype)

    def backward(self, grad):
        n = self.labels.shape[0]
        g = self.p.copy()
        g[np.arange(n), self.labels] -= 1.0
        return (g * (grad / n),)


class MSE(Function):
    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeMismatchError(f"mse: {a.shape} 与 {b.shape} 形状不同")
        self.diff = a - b
        return np.asarray((self.diff ** 2).mean(), dtype=a.dtype)

    def backward(self, grad):
        ga = 2.0 * self.diff * (grad / self.diff.size)
        return (ga, -ga)


def _im2col(x: np.ndarray, k: int, s: int, out_h: int, out_w: int) -> np.ndarray:
    """(B,C,H,W) -> (B,C,k,k,out_h,out_w) 的窗口视图"""
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, : (out_h - 1) * s + 1 : s, : (out_w - 1) * s + 1 : s]
    return win.transpose(0, 1, 4, 5, 2, 3)


def _col2im(cols: np.ndarray, shape, k: int, s: int, out_h: int, out_w: int) -> np.ndarray:
    """_im2col 的伴随：把 (B,C,k,k,oh,ow) 的列累加回 (B,C,H,W)"""
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s] += cols[:, :, i, j]
    return out


class Conv2d(Function):
    def forward(self, x, w, b, stride=1, padding=0, groups=1):
        if x.ndim != 4 or w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeMismatchError(f"conv2d: 输入 {x.shape} 与权重 {w.shape} 维度不正确")
        n, c, h, wd = x.shape
        o, cg, k, _ = w.shape
        if c != cg * groups or o % groups != 0 or b.shape != (o,):
            raise ShapeMismatchError(
                f"conv2d: 输入 {x.shape} 与权重 {w.shape} 不匹配 (groups={groups}, bias={b.shape})"
            )
        hp, wp = h + 2 * padding, wd + 2 * padding
        if hp < k or wp < k:
            raise ZeroSizeOutputError(f"conv2d: 卷积核 {k} 大于填充后的输入 {hp}x{wp}")
        oh, ow = (hp - k) // stride + 1, (wp - k) // stride + 1

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        g, og = groups, o // groups
        cols = _im2col(xp, k, stride, oh, ow).reshape(n, g, cg * k * k, oh * ow)
        wm = w.reshape(g, og, cg * k * k)
        out = np.matmul(wm[None], cols).reshape(n, o, oh, ow) + b[None, :, None, None]

        self.cols, self.wm = cols, wm
        self.meta = (x.shape, xp.shape, w.shape, stride, padding, groups, oh, ow)
        return out

    def backward(self, grad):
        x_shape, xp_shape, w_shape, s, p, g, oh, ow = self.meta
        n, c = x_shape[:2]
        o, _, k, _ = w_shape
        g4 = grad.reshape(n, g, o // g, oh * ow)
        gw = np.matmul(g4, self.cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(w_shape)
        gb = grad.sum(axis=(0, 2, 3))
        gcols = np.matmul(self.wm.transpose(0, 2, 1)[None], g4).reshape(n, c, k, k, oh, ow)
        gxp = _col2im(gcols, xp_shape, k, s, oh, ow)
        gx = gxp[:, :, p : p + x_shape[2], p : p + x_shape[3]] if p else gxp
        return (np.ascontiguousarray(gx), gw, gb)


class ConvTranspose2d(Function):
    """转置卷积，权重布局 (in, out, k, k)，无填充"""

    def forward(self, x, w, b, stride=1):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
            raise ShapeMismatchError(f"conv_transpose2d: 输入 {x.shape} 与权重 {w.shape} 不匹配")
        if stride < 1:
            raise ShapeMismatchError(f"conv_transpose2d: stride 必须 >= 1，实际 {stride}")
        n, ci, h, wd = x.shape
        _, o, k, _ = w.shape
        oh, ow = (h - 1) * stride + k, (wd - 1) * stride + k

        wm = w.reshape(ci, o * k * k)
        xm = x.reshape(n, ci, h * wd)
        cols = np.matmul(wm.T[None], xm).reshape(n, o, k, k, h, wd)
        out = _col2im(cols, (n, o, oh, ow), k, stride, h, wd) + b[None, :, None, None]

        self.xm, self.wm = xm, wm
        self.meta = (x.shape, w.shape, stride)
        return out

    def backward(self, grad):
        (n, ci, h, wd), w_shape, s = self.meta
        _, o, k, _ = w_shape
        gcols = _im2col(grad, k, s, h, wd).reshape(n, o * k * k, h * wd)
        gx = np.matmul(self.wm[None], gcols).reshape(n, ci, h, wd)
        gw = np.matmul(self.xm, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w_shape)
        gb = grad.sum(axis=(0, 2, 3))
        return (gx, gw, gb)


class MaxPool2d(Function):
    """最大池化，并列最大值取行优先的第一个"""

    def forward(self, x, kernel=2, stride=2):
        n, c, h, w = x.shape
        if kernel < 1 or stride < 1 or kernel > h or kernel > w:
            raise DegenerateWindowError(f"maxpool2d: 窗口 {kernel}/{stride} 不适用于 {h}x{w} 输入")
        oh, ow = (h - kernel) // stride + 1, (w - kernel) // stride + 1
        win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
        win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
        flat = win.reshape(n, c, oh, ow, kernel * kernel)
        self.arg = flat.argmax(axis=-1)
        self.meta = (x.shape, x.dtype, kernel, stride, oh, ow)
        return np.take_along_axis(flat, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        shape, dtype, k, s, oh, ow = self.meta
        gx = np.zeros(shape, dtype=dtype)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            gx[:, :, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s] += grad * (self.arg == idx)
        return (gx,)


class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, running_mean=None, running_var=None,
                training=True, momentum=0.1, eps=1e-5):
        c = x.shape[1]
        if gamma.shape != (c,) or beta.shape != (c,):
            raise ShapeMismatchError(f"batchnorm2d: 通道数 {c} 与参数 {gamma.shape}/{beta.shape} 不匹配")
        self.training = training
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count < 2:
                raise DegenerateVarianceError("batchnorm2d: 训练模式下每个通道至少需要两个元素")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if running_mean is not None:
                running_mean *= 1.0 - momentum
                running_mean += momentum * mean
                running_var *= 1.0 - momentum
                running_var += momentum * var * count / (count - 1)
            self.count = count
        else:
            mean, var = running_mean, running_var
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        self.xhat = (x - mean[None, :, None, None]) * self.inv_std[None, :, None, None]
        self.gamma = gamma
        return gamma[None, :, None, None] * self.xhat + beta[None, :, None, None]

    def backward(self, grad):
        xhat, inv_std = self.xhat, self.inv_std[None, :, None, None]
        ggamma = (grad * xhat).sum(axis=(0, 2, 3))
        gbeta = grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.gamma[None, :, None, None]
        if self.training:
            m = self.count
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (inv_std / m) * (m * dxhat - s1 - xhat * s2)
        else:
            gx = dxhat * inv_std
        return (gx, ggamma, gbeta)


class LayerNorm(Function):
    """最后一维上的层归一化"""

    def forward(self, x, gamma, beta, eps=1e-5):
        d = x.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            raise ShapeMismatchError(f"layernorm: 最后一维 {d} 与参数 {gamma.shape}/{beta.shape} 不匹配")
        if d < 2:
            raise DegenerateVarianceError("layernorm: 归一化维度至少需要两个元素")
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mean) * self.inv_std
        self.gamma = gamma
        return self.xhat * gamma + beta

    def backward(self, grad):
        xhat, d = self.xhat, self.xhat.shape[-1]
        lead = tuple(range(grad.ndim - 1))
        ggamma = (grad * xhat).sum(axis=lead)
        gbeta = grad.sum(axis=lead)
        dxhat = grad * self.gamma
        s1 = dxhat.sum(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
        gx = (self.inv_std / d) * (d * dxhat - s1 - xhat * s2)
        return (gx, ggamma, gbeta)


def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """
    一维双线性插值矩阵（align_corners=False）

    参数:
        n_in (int): 输入长度
        n_out (int): 输出长度

    返回:
        np.ndarray: (n_out, n_in) 插值矩阵，每行和为 1
    """
    scale = n_in / n_out
    src = np.maximum((np.arange(n_out) + 0.5) * scale - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    lam = src - i0
    rows = np.arange(n_out)
    m = np.zeros((n_out, n_in), dtype=dtype)
    m[rows, i0] += 1.0 - lam
    m[rows, i1] += lam
    return m


class ResizeBilinear(Function):
    def forward(self, x, out_h=1, out_w=1):
        if out_h < 1 or out_w < 1:
            raise ZeroSizeOutputError(f"resize_bilinear: 输出尺寸无效 {out_h}x{out_w}")
        self.rh = bilinear_matrix(x.shape[2], out_h, x.dtype)
        self.rw = bilinear_matrix(x.shape[3], out_w, x.dtype)
        return np.matmul(self.rh, np.matmul(x, self.rw.T))

    def backward(self, grad):
        return (np.matmul(np.matmul(self.rh.T, grad), self.rw),)


# ---------------------------------------------------------------------------
# 函数式接口
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def neg(x) -> Tensor:
    return Neg.apply(x)


def exp(x) -> Tensor:
    return Exp.apply(x)


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return Sum.apply(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x, shape) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x, axes=None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def getitem(x, index) -> Tensor:
    return GetItem.apply(x, index=index)


def concat(tensors: Sequence[Tensor], axis=0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def pad(x, pad_width) -> Tensor:
    return Pad.apply(x, pad_width=tuple(tuple(p) for p in pad_width))


def roll(x, shift, axis) -> Tensor:
    return Roll.apply(x, shift=tuple(shift), axis=tuple(axis))


def take(table, indices) -> Tensor:
    return Take.apply(table, indices=np.asarray(indices))


def sigmoid(x) -> Tensor:
    return Sigmoid.apply(x)


def relu(x) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def gelu(x) -> Tensor:
    return GELU.apply(x)


def activation(x, kind: str, slope: float = 0.01) -> Tensor:
    """
    按名称应用激活函数

    参数:
        kind (str): relu / leaky_relu / gelu / sigmoid
        slope (float): leaky_relu 的负半轴斜率
    """
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "gelu":
        return gelu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"未知的激活函数: {kind}")


def _bias_or_zeros(bias, size, like) -> Tensor:
    if bias is None:
        return as_tensor(np.zeros(size, dtype=like.dtype))
    return bias


def linear(x, weight, bias=None) -> Tensor:
    return Linear.apply(x, weight, _bias_or_zeros(bias, weight.shape[0], x))


def softmax(x, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def cross_entropy(logits, labels) -> Tensor:
    return CrossEntropy.apply(logits, labels=np.asarray(labels))


def mse(a, b) -> Tensor:
    return MSE.apply(a, b)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    return Conv2d.apply(x, weight, _bias_or_zeros(bias, weight.shape[0], x),
                        stride=stride, padding=padding, groups=groups)


def conv_transpose2d(x, weight, bias=None, stride: int = 1) -> Tensor:
    return ConvTranspose2d.apply(x, weight, _bias_or_zeros(bias, weight.shape[1], x), stride=stride)


def maxpool2d(x, kernel: int = 2, stride: int = 2) -> Tensor:
    return MaxPool2d.apply(x, kernel=kernel, stride=stride)


def batchnorm2d(x, gamma, beta, running_mean, running_var, training: bool,
                momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    return BatchNorm2d.apply(x, gamma, beta, running_mean=running_mean, running_var=running_var,
                             training=training, momentum=momentum, eps=eps)


def layernorm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def resize_bilinear(x, out_h: int, out_w: int) -> Tensor:
    return ResizeBilinear.apply(x, out_h=out_h, out_w=out_w)
