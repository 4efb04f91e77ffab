"""
张量核心测试
逐个算子的前向取值、梯度检查与错误路径
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from tensorcore import ops
from tensorcore.gradcheck import check_gradients
from tensorcore.tensor import Tensor, backward, default_dtype, get_default_dtype, no_grad
from utils.errors import (
    DegenerateVarianceError,
    DegenerateWindowError,
    DisconnectedGraphError,
    DTypeMismatchError,
    LabelRangeError,
    NonScalarLossError,
    ShapeMismatchError,
    ZeroSizeOutputError,
)

GRAD_TOL = 1e-6


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


def _weighted(out_fn, rng):
    """用随机权重把输出压成标量，避免梯度在求和时相互抵消"""
    sample = out_fn()
    weights = rng.standard_normal(sample.shape)
    return lambda: (out_fn() * Tensor(weights, dtype=np.float64)).sum()


# ---------------------------------------------------------------------------
# 前向取值
# ---------------------------------------------------------------------------

def test_default_dtype_is_float32():
    """默认精度为 float32"""
    assert get_default_dtype() == np.float32
    assert Tensor([1.0, 2.0]).dtype == np.float32


def test_dtype_mismatch_raises():
    """两个输入精度不同的运算报错"""
    a = Tensor(np.ones(3, dtype=np.float32))
    b = Tensor(np.ones(3, dtype=np.float64))
    with pytest.raises(DTypeMismatchError):
        ops.add(a, b)


def test_default_dtype_is_per_thread():
    """切换精度只影响当前线程"""
    with default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
        with ThreadPoolExecutor(max_workers=1) as pool:
            other = pool.submit(lambda: (get_default_dtype(), Tensor([1.0]).dtype)).result()
    assert other == (np.float32, np.float32)
    assert get_default_dtype() == np.float32


def test_reductions_to_scalar_have_empty_shape():
    """全量归约和损失的形状是 ()"""
    x = Tensor(np.ones((2, 3)))
    assert x.sum().shape == ()
    assert x.mean().shape == ()
    assert ops.mse(x, x).shape == ()
    assert ops.cross_entropy(Tensor(np.zeros((2, 3))), [0, 2]).shape == ()
    assert Tensor(2.5).shape == ()
    assert x.sum().item() == 6.0


def test_item_requires_single_element():
    assert Tensor([4.0]).item() == 4.0
    with pytest.raises(ShapeMismatchError):
        Tensor(np.ones(3)).item()


def test_relu_and_leaky_relu_values():
    """ReLU 与 LeakyReLU 的取值"""
    x = Tensor([-2.0, 0.0, 3.0])
    assert ops.relu(x).data.tolist() == [0.0, 0.0, 3.0]
    np.testing.assert_allclose(ops.leaky_relu(x, 0.1).data, [-0.2, 0.0, 3.0], rtol=1e-6)


def test_sigmoid_and_gelu_values():
    """sigmoid(0)=0.5，GELU(0)=0 且 GELU 在大正数处接近恒等"""
    x = Tensor([0.0, 10.0])
    np.testing.assert_allclose(ops.sigmoid(x).data, [0.5, 1 / (1 + math.exp(-10))], rtol=1e-6)
    np.testing.assert_allclose(ops.gelu(x).data, [0.0, 10.0], atol=1e-5)


def test_activation_dispatch():
    x = Tensor([-1.0, 1.0])
    np.testing.assert_array_equal(ops.activation(x, "relu").data, ops.relu(x).data)
    with pytest.raises(ValueError):
        ops.activation(x, "swish")


def test_softmax_is_stable_and_normalized():
    """大数值输入不溢出，每行和为 1"""
    out = ops.softmax(Tensor([[1000.0, 0.0], [3.0, 3.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[0], [1.0, 0.0], atol=1e-7)
    np.testing.assert_allclose(out[1], [0.5, 0.5], rtol=1e-6)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, rtol=1e-6)


def test_cross_entropy_uniform_logits():
    """logits [0,0] 时交叉熵为 ln 2"""
    loss = ops.cross_entropy(Tensor([[0.0, 0.0]]), [0])
    assert loss.item() == pytest.approx(math.log(2), rel=1e-6)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelRangeError):
        ops.cross_entropy(Tensor([[0.0, 0.0]]), [2])


def test_mse_value_and_shape_check():
    """mse([0,0],[1,1]) = 1，形状不同报错"""
    assert ops.mse(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == pytest.approx(1.0)
    with pytest.raises(ShapeMismatchError):
        ops.mse(Tensor([0.0, 0.0]), Tensor([1.0, 1.0, 1.0]))


def test_maxpool_picks_window_maximum():
    """4×4 的 1..16 做 2×2 池化得到 [[6,8],[14,16]]"""
    x = Tensor(np.arange(1, 17, dtype=np.float32).reshape(1, 1, 4, 4))
    out = ops.maxpool2d(x, 2, 2).data[0, 0]
    assert out.tolist() == [[6.0, 8.0], [14.0, 16.0]]


def test_maxpool_tie_routes_gradient_to_first():
    """并列最大值时梯度只给第一个位置"""
    x = Tensor(np.ones((1, 1, 2, 2), dtype=np.float64), requires_grad=True)
    grads = backward(ops.maxpool2d(x, 2, 2).sum())
    assert grads.of(x)[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_maxpool_degenerate_window():
    with pytest.raises(DegenerateWindowError):
        ops.maxpool2d(Tensor(np.zeros((1, 1, 1, 1))), 2, 2)


def test_identity_conv_and_transposed_conv():
    """1×1 单位卷积核与 k1 s1 的单位转置卷积都是恒等映射"""
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 3, 5, 5)).astype(np.float32))
    eye = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    np.testing.assert_allclose(ops.conv2d(x, Tensor(eye)).data, x.data, rtol=1e-6)
    np.testing.assert_allclose(ops.conv_transpose2d(x, Tensor(eye)).data, x.data, rtol=1e-6)


def test_conv_output_shapes():
    """k3 s2 p1 把 8×8 变成 4×4；k2 s2 转置卷积把 4×4 变回 8×8"""
    x = Tensor(np.zeros((1, 3, 8, 8), dtype=np.float32))
    y = ops.conv2d(x, Tensor(np.zeros((5, 3, 3, 3), dtype=np.float32)), stride=2, padding=1)
    assert y.shape == (1, 5, 4, 4)
    z = ops.conv_transpose2d(y, Tensor(np.zeros((5, 2, 2, 2), dtype=np.float32)), stride=2)
    assert z.shape == (1, 2, 8, 8)


def test_conv_kernel_larger_than_input():
    x = Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32))
    with pytest.raises(ZeroSizeOutputError):
        ops.conv2d(x, Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32)))


def test_conv_backward_is_linear_in_upstream_gradient():
    """上游梯度翻倍，所有输入梯度精确翻倍"""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 4, 6, 6))
    w = rng.standard_normal((6, 2, 3, 3))
    b = rng.standard_normal(6)
    fn = ops.Conv2d()
    out = fn.forward(x, w, b, 1, 1, 2)
    g = rng.standard_normal(out.shape)
    single = fn.backward(g)
    double = fn.backward(2.0 * g)
    for s, d in zip(single, double):
        np.testing.assert_array_equal(d, 2.0 * s)


def test_batchnorm_training_statistics():
    """训练模式输出每通道均值 0、方差 1；gamma=2, beta=3 时均值 3、标准差 2"""
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((4, 3, 5, 5)) * 4 + 7)
    mean = np.zeros(3)
    var = np.ones(3)
    out = ops.batchnorm2d(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), mean, var, training=True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-7)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)

    out = ops.batchnorm2d(x, Tensor(np.full(3, 2.0)), Tensor(np.full(3, 3.0)),
                          np.zeros(3), np.ones(3), training=True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 3.0, atol=1e-6)
    np.testing.assert_allclose(out.std(axis=(0, 2, 3)), 2.0, rtol=1e-3)


def test_batchnorm_updates_running_stats_and_eval_uses_them():
    """训练时更新滑动统计量；推理时使用滑动统计量"""
    x = Tensor(np.arange(2 * 1 * 2 * 2, dtype=np.float64).reshape(2, 1, 2, 2))
    running_mean, running_var = np.zeros(1), np.ones(1)
    ops.batchnorm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), running_mean, running_var,
                    training=True, momentum=0.1)
    values = x.data.reshape(-1)
    assert running_mean[0] == pytest.approx(0.1 * values.mean())
    assert running_var[0] == pytest.approx(0.9 + 0.1 * values.var(ddof=1))

    out = ops.batchnorm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), np.array([1.0]), np.array([4.0]),
                          training=False, eps=0.0).data
    np.testing.assert_allclose(out, (x.data - 1.0) / 2.0)


def test_batchnorm_single_value_per_channel():
    x = Tensor(np.zeros((1, 2, 1, 1)))
    with pytest.raises(DegenerateVarianceError):
        ops.batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), training=True)


def test_layernorm_normalizes_last_axis():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((3, 4, 6)) * 5 + 2)
    out = ops.layernorm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-7)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-3)
    with pytest.raises(DegenerateVarianceError):
        ops.layernorm(Tensor(np.ones((2, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_resize_bilinear_identity_and_constant():
    """同尺寸缩放是恒等映射；常数图缩放后仍为常数"""
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((1, 3, 5, 5)))
    np.testing.assert_allclose(ops.resize_bilinear(x, 5, 5).data, x.data, atol=1e-12)
    const = Tensor(np.full((1, 2, 4, 4), 0.25))
    np.testing.assert_allclose(ops.resize_bilinear(const, 8, 8).data, 0.25, atol=1e-12)
    with pytest.raises(ZeroSizeOutputError):
        ops.resize_bilinear(x, 0, 4)


def test_bilinear_matrix_rows_sum_to_one():
    m = ops.bilinear_matrix(4, 8)
    assert m.shape == (8, 4)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)


# ---------------------------------------------------------------------------
# 反向传播
# ---------------------------------------------------------------------------

def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NonScalarLossError):
        backward(x * 2.0)


def test_backward_rejects_disconnected_loss():
    """没有记录的损失和已经反传过的损失都报错"""
    with pytest.raises(DisconnectedGraphError):
        backward(Tensor(1.0))
    x = Tensor(np.ones(3), requires_grad=True)
    loss = (x * 2.0).sum()
    backward(loss)
    with pytest.raises(DisconnectedGraphError):
        backward(loss)


def test_unreachable_params_get_zero_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    grads = backward((x * x).sum(), params=[x, unused])
    np.testing.assert_array_equal(grads.of(x), [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(grads.of(unused), [0.0, 0.0])


def test_gradients_accumulate_on_reused_tensor():
    """同一张量被使用两次时梯度相加"""
    x = Tensor(np.array([3.0]), requires_grad=True)
    grads = backward((x * x + x).sum())
    assert grads.of(x)[0] == pytest.approx(7.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert y.is_leaf
    assert y.grad_id is None


# ---------------------------------------------------------------------------
# 梯度检查（float64，中心差分）
# ---------------------------------------------------------------------------

def test_gradcheck_elementwise_and_matmul(f64):
    rng = np.random.default_rng(10)
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    c = _param(rng, 3, 4)
    fn = _weighted(lambda: ops.matmul(ops.exp(a * 0.3) - c * a + (-c), b), rng)
    assert check_gradients(fn, [a, b, c]) < GRAD_TOL


@pytest.mark.parametrize("kind", ["relu", "leaky_relu", "gelu", "sigmoid"])
def test_gradcheck_activations(f64, kind):
    rng = np.random.default_rng(11)
    x = _param(rng, 3, 5)
    fn = _weighted(lambda: ops.activation(x, kind, 0.1), rng)
    assert check_gradients(fn, [x]) < GRAD_TOL


def test_gradcheck_shape_ops(f64):
    """reshape / transpose / getitem / concat / pad / roll / take"""
    rng = np.random.default_rng(12)
    x = _param(rng, 2, 3, 4)
    y = _param(rng, 2, 3, 2)
    table = _param(rng, 5, 2)
    index = np.array([[0, 4], [4, 1]])

    def out():
        z = ops.concat([x, y], axis=-1).transpose(0, 2, 1)
        z = ops.pad(z, ((0, 0), (1, 0), (0, 1)))
        z = ops.roll(z, (1, -1), (1, 2))[:, 1:, :]
        return z.reshape(2, -1).sum(axis=-1, keepdims=True) * ops.take(table, index).reshape(2, 4)

    assert check_gradients(_weighted(out, rng), [x, y, table]) < GRAD_TOL


def test_gradcheck_linear_softmax_cross_entropy(f64):
    rng = np.random.default_rng(13)
    x, w, b = _param(rng, 4, 6), _param(rng, 3, 6), _param(rng, 3)
    labels = np.array([0, 2, 1, 2])
    fn = lambda: ops.cross_entropy(ops.linear(x, w, b), labels)  # noqa: E731
    assert check_gradients(fn, [x, w, b]) < GRAD_TOL
    fn = _weighted(lambda: ops.softmax(ops.linear(x, w, b), axis=-1), rng)
    assert check_gradients(fn, [x, w, b]) < GRAD_TOL


def test_gradcheck_mse_and_mean(f64):
    rng = np.random.default_rng(14)
    a, b = _param(rng, 2, 3, 2), _param(rng, 2, 3, 2)
    fn = lambda: ops.mse(a, b) + ops.mean(a * b, axis=1).sum()  # noqa: E731
    assert check_gradients(fn, [a, b]) < GRAD_TOL


@pytest.mark.parametrize("stride,padding,groups", [(1, 1, 1), (2, 1, 1), (1, 3, 4), (2, 0, 2)])
def test_gradcheck_conv2d(f64, stride, padding, groups):
    rng = np.random.default_rng(15)
    x = _param(rng, 2, 4, 6, 6)
    k = 7 if padding == 3 else 3
    w = _param(rng, 4, 4 // groups, k, k, scale=0.3)
    b = _param(rng, 4)
    fn = _weighted(lambda: ops.conv2d(x, w, b, stride, padding, groups), rng)
    assert check_gradients(fn, [x, w, b], sample=64) < GRAD_TOL


def test_gradcheck_conv_transpose2d(f64):
    rng = np.random.default_rng(16)
    x, w, b = _param(rng, 2, 3, 3, 3), _param(rng, 3, 2, 2, 2), _param(rng, 2)
    fn = _weighted(lambda: ops.conv_transpose2d(x, w, b, stride=2), rng)
    assert check_gradients(fn, [x, w, b]) < GRAD_TOL


def test_gradcheck_maxpool(f64):
    rng = np.random.default_rng(17)
    x = _param(rng, 2, 2, 4, 4)
    fn = _weighted(lambda: ops.maxpool2d(x, 2, 2), rng)
    assert check_gradients(fn, [x]) < GRAD_TOL


def test_gradcheck_batchnorm_training(f64):
    rng = np.random.default_rng(18)
    x, g, b = _param(rng, 3, 2, 3, 3), _param(rng, 2), _param(rng, 2)
    fn = _weighted(lambda: ops.batchnorm2d(x, g, b, np.zeros(2), np.ones(2), training=True), rng)
    assert check_gradients(fn, [x, g, b]) < GRAD_TOL


def test_gradcheck_layernorm(f64):
    rng = np.random.default_rng(19)
    x, g, b = _param(rng, 2, 3, 5), _param(rng, 5), _param(rng, 5)
    fn = _weighted(lambda: ops.layernorm(x, g, b), rng)
    assert check_gradients(fn, [x, g, b]) < GRAD_TOL


def test_gradcheck_resize_bilinear(f64):
    rng = np.random.default_rng(20)
    x = _param(rng, 1, 2, 3, 3)
    fn = _weighted(lambda: ops.resize_bilinear(x, 6, 5), rng)
    assert check_gradients(fn, [x]) < GRAD_TOL
