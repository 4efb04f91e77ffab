"""
ConvNeXt-Swin 混合主干
ConvNeXt 卷积特征提取、HybridEmbed 投影、移位窗口注意力塔和 1000 维输出头
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from models.config import BackboneConfig
from tensorcore import ops
from tensorcore.nn import Conv2d, LayerNorm, LayerNorm2d, Linear, Module, ModuleList, Parameter
from tensorcore.tensor import Tensor, as_tensor, get_default_dtype
from utils.errors import HeadDivisibilityError, OddGridError, ShapeMismatchError

logger = logging.getLogger(__name__)

# 跨窗口区域之间的注意力偏置
MASK_VALUE = -100.0


@dataclass
class TokenSequence:
    """B×N×D 的 token 序列及其网格 (h, w)，h·w = N"""

    tokens: Tensor
    grid: Tuple[int, int]

    def __post_init__(self):
        h, w = self.grid
        if self.tokens.ndim != 3 or self.tokens.shape[1] != h * w:
            raise ShapeMismatchError(f"token 数 {self.tokens.shape} 与网格 {self.grid} 不一致")

    def as_grid(self) -> Tensor:
        b, _, d = self.tokens.shape
        return self.tokens.reshape(b, self.grid[0], self.grid[1], d)


# ---------------------------------------------------------------------------
# ConvNeXt
# ---------------------------------------------------------------------------

class Mlp(Module):
    def __init__(self, dim, hidden, rng):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng=rng)
        self.fc2 = Linear(hidden, dim, rng=rng)

    def forward(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))


class ConvNeXtBlock(Module):
    """depthwise 7×7 -> LayerNorm -> 1×1 扩张 ×4 -> GELU -> 1×1 投影 -> 残差"""

    def __init__(self, dim, mlp_ratio=4, rng=None):
        super().__init__()
        self.dim = dim
        self.dwconv = Conv2d(dim, dim, 7, padding=3, groups=dim, rng=rng)
        self.norm = LayerNorm(dim)
        self.pwconv1 = Linear(dim, mlp_ratio * dim, rng=rng)
        self.pwconv2 = Linear(mlp_ratio * dim, dim, rng=rng)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.dim:
            raise ShapeMismatchError(f"convnext_block: 期望 {self.dim} 通道，实际输入 {x.shape}")
        y = self.dwconv(x).transpose(0, 2, 3, 1)
        y = self.pwconv2(ops.gelu(self.pwconv1(self.norm(y))))
        return x + y.transpose(0, 3, 1, 2)


class Downsample(Module):
    def __init__(self, cin, cout, rng):
        super().__init__()
        self.norm = LayerNorm2d(cin)
        self.conv = Conv2d(cin, cout, 2, stride=2, rng=rng)

    def forward(self, x):
        return self.conv(self.norm(x))


class ConvNeXt(Module):
    """stem（k = s = stem_patch）后接若干阶段，阶段之间 LN + 2×2/2 卷积下采样"""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        widths, depths = config.stage_widths, config.stage_depths
        self.stride = config.stem_patch * 2 ** (len(widths) - 1)
        self.stem = Conv2d(3, widths[0], config.stem_patch, stride=config.stem_patch, rng=rng)
        self.stem_norm = LayerNorm2d(widths[0])
        self.downsample = ModuleList(Downsample(widths[i - 1], widths[i], rng) for i in range(1, len(widths)))
        self.stages = ModuleList(
            ModuleList(ConvNeXtBlock(widths[i], config.mlp_ratio, rng) for _ in range(depths[i]))
            for i in range(len(widths))
        )

    def forward(self, image: Tensor) -> Tensor:
        h, w = image.shape[2:]
        if h % self.stride or w % self.stride:
            raise ShapeMismatchError(f"convnext: 输入 {h}x{w} 不能被总步长 {self.stride} 整除")
        x = self.stem_norm(self.stem(image))
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = self.downsample[i - 1](x)
            for block in stage:
                x = block(x)
        return x


class HybridEmbed(Module):
    """1×1 卷积把特征图投影到 embed_dim，再展平为 token 序列"""

    def __init__(self, in_channels, embed_dim, rng):
        super().__init__()
        self.proj = Conv2d(in_channels, embed_dim, 1, rng=rng)

    def forward(self, fmap: Tensor) -> TokenSequence:
        x = self.proj(fmap)
        b, d, h, w = x.shape
        tokens = x.reshape(b, d, h * w).transpose(0, 2, 1)
        return TokenSequence(tokens, (h, w))


# ---------------------------------------------------------------------------
# 窗口注意力
# ---------------------------------------------------------------------------

def window_partition(x, window: int, shift: int = 0) -> Tensor:
    """
    循环移位后切分成不重叠的窗口

    参数:
        x: B×H×W×D 张量或 TokenSequence，H、W 必须是 window 的整数倍
        window (int): 窗口边长
        shift (int): 循环移位量

    返回:
        Tensor: (B·nW)×window²×D
    """
    if isinstance(x, TokenSequence):
        x = x.as_grid()
    b, h, w, d = x.shape
    if h % window or w % window:
        raise ShapeMismatchError(f"window_partition: 网格 {h}x{w} 不是窗口 {window} 的整数倍")
    if shift:
        x = ops.roll(x, (-shift, -shift), (1, 2))
    x = x.reshape(b, h // window, window, w // window, window, d).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, window * window, d)


def window_reverse(windows: Tensor, window: int, h: int, w: int, shift: int = 0) -> Tensor:
    """window_partition 的逆运算，返回 B×H×W×D"""
    d = windows.shape[-1]
    b = windows.shape[0] // ((h // window) * (w // window))
    x = windows.reshape(b, h // window, w // window, window, window, d).transpose(0, 1, 3, 2, 4, 5)
    x = x.reshape(b, h, w, d)
    if shift:
        x = ops.roll(x, (shift, shift), (1, 2))
    return x


@lru_cache(maxsize=64)
def attention_mask(padded: Tuple[int, int], grid: Tuple[int, int], window: int, shift: int) -> Optional[np.ndarray]:
    """
    移位窗口与填充的注意力掩码

    参数:
        padded: 填充后的网格 (Hp, Wp)
        grid: 真实网格 (h, w)，超出部分为填充
        window, shift: 窗口边长与移位量

    返回:
        np.ndarray 或 None: nW×N×N，同区域为 0，跨区域为 MASK_VALUE；无需掩码时为 None
    """
    hp, wp = padded
    h, w = grid
    if shift == 0 and (hp, wp) == (h, w):
        return None

    # 在移位后的坐标系中按区域编号
    labels = np.zeros((hp, wp), dtype=np.int64)
    if shift:
        spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
        count = 0
        for hs in spans:
            for ws in spans:
                labels[hs, ws] = count
                count += 1
    # 填充位置单独成一类
    pad = np.zeros((hp, wp), dtype=bool)
    pad[h:, :] = True
    pad[:, w:] = True
    if shift:
        pad = np.roll(pad, (-shift, -shift), (0, 1))
    labels[pad] = -1

    blocks = labels.reshape(hp // window, window, wp // window, window).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(-1, window * window)
    mask = np.where(blocks[:, :, None] == blocks[:, None, :], 0.0, MASK_VALUE)
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=64)
def relative_position_index(window: int, table_window: int) -> np.ndarray:
    """window² × window² 的相对位置下标，按 table_window 的表布局编码"""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (table_window - 1)
    index = rel[0] * (2 * table_window - 1) + rel[1]
    index.setflags(write=False)
    return index


def window_attention(windows: Tensor, qkv_weight, qkv_bias, proj_weight, proj_bias,
                     num_heads: int, bias=None, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    多头窗口自注意力 softmax(QKᵀ/√d + bias + mask)·V，再做输出投影

    参数:
        windows (Tensor): B'×N×D
        bias: heads×N×N 的相对位置偏置，可为 None
        mask (np.ndarray): nW×N×N 掩码，可为 None

    异常:
        HeadDivisibilityError: D 不能被头数整除
    """
    bw, n, d = windows.shape
    if num_heads < 1 or d % num_heads:
        raise HeadDivisibilityError(f"维度 {d} 不能被头数 {num_heads} 整除")
    hd = d // num_heads

    qkv = ops.linear(windows, qkv_weight, qkv_bias).reshape(bw, n, 3, num_heads, hd)
    qkv = qkv.transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0] * (hd ** -0.5), qkv[1], qkv[2]

    attn = q @ k.transpose(0, 1, 3, 2)
    if bias is not None:
        attn = attn + bias
    if mask is not None:
        nw = mask.shape[0]
        attn = attn.reshape(bw // nw, nw, num_heads, n, n) + as_tensor(mask[None, :, None].astype(windows.dtype))
        attn = attn.reshape(bw, num_heads, n, n)
    attn = ops.softmax(attn, axis=-1)

    out = (attn @ v).transpose(0, 2, 1, 3).reshape(bw, n, d)
    return ops.linear(out, proj_weight, proj_bias)


class WindowAttention(Module):
    """带相对位置偏置表的窗口注意力，偏置表初始化为零"""

    def __init__(self, dim, num_heads, window, rng):
        super().__init__()
        if num_heads < 1 or dim % num_heads:
            raise HeadDivisibilityError(f"维度 {dim} 不能被头数 {num_heads} 整除")
        self.num_heads = num_heads
        self.window = window
        self.qkv = Linear(dim, 3 * dim, rng=rng)
        self.proj = Linear(dim, dim, rng=rng)
        self.relative_position_bias_table = Parameter(
            np.zeros(((2 * window - 1) ** 2, num_heads), dtype=get_default_dtype())
        )

    def position_bias(self, window: int) -> Tensor:
        index = relative_position_index(window, self.window)
        bias = ops.take(self.relative_position_bias_table, index)
        return bias.transpose(2, 0, 1)

    def forward(self, windows: Tensor, window: int, mask: Optional[np.ndarray] = None) -> Tensor:
        return window_attention(
            windows, self.qkv.weight, self.qkv.bias, self.proj.weight, self.proj.bias,
            self.num_heads, self.position_bias(window), mask,
        )


class SwinBlock(Module):
    """x + attn(LN(x))，再 x + MLP(LN(x))；奇数块使用半窗口移位"""

    def __init__(self, dim, num_heads, window, shifted, mlp_ratio, rng):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio * dim, rng)

    def geometry(self, grid: Tuple[int, int]) -> Tuple[int, int, Tuple[int, int]]:
        """实际窗口、移位量与填充后的网格；网格放得进一个窗口时不移位"""
        h, w = grid
        if min(h, w) <= self.window:
            window, shift = min(h, w), 0
        else:
            window = self.window
            shift = window // 2 if self.shifted else 0
        padded = (-(-h // window) * window, -(-w // window) * window)
        return window, shift, padded

    def forward(self, seq: TokenSequence) -> TokenSequence:
        x, (h, w) = seq.tokens, seq.grid
        b, n, d = x.shape
        window, shift, (hp, wp) = self.geometry((h, w))

        y = self.norm1(x).reshape(b, h, w, d)
        if (hp, wp) != (h, w):
            y = ops.pad(y, ((0, 0), (0, hp - h), (0, wp - w), (0, 0)))
        windows = window_partition(y, window, shift)
        windows = self.attn(windows, window, attention_mask((hp, wp), (h, w), window, shift))
        y = window_reverse(windows, window, hp, wp, shift)
        if (hp, wp) != (h, w):
            y = y[:, :h, :w, :]
        x = x + y.reshape(b, n, d)
        x = x + self.mlp(self.norm2(x))
        return TokenSequence(x, (h, w))


class PatchMerging(Module):
    """2×2 邻域拼接为 4D，LayerNorm 后线性投影到 2D"""

    def __init__(self, dim, rng):
        super().__init__()
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, bias=False, rng=rng)

    def forward(self, seq: TokenSequence) -> TokenSequence:
        h, w = seq.grid
        if h % 2 or w % 2:
            raise OddGridError(f"patch_merging 需要偶数网格，实际 {h}x{w}")
        x = seq.as_grid()
        b, _, _, d = x.shape
        x0 = x[:, 0::2, 0::2, :]
        x1 = x[:, 1::2, 0::2, :]
        x2 = x[:, 0::2, 1::2, :]
        x3 = x[:, 1::2, 1::2, :]
        x = ops.concat([x0, x1, x2, x3], axis=-1).reshape(b, (h // 2) * (w // 2), 4 * d)
        return TokenSequence(self.reduction(self.norm(x)), (h // 2, w // 2))


def pad_to_even(seq: TokenSequence) -> TokenSequence:
    """奇数网格在右侧/下侧补零，使其可以做 patch merging"""
    h, w = seq.grid
    if h % 2 == 0 and w % 2 == 0:
        return seq
    x = seq.as_grid()
    b, _, _, d = x.shape
    x = ops.pad(x, ((0, 0), (0, h % 2), (0, w % 2), (0, 0)))
    hp, wp = h + h % 2, w + w % 2
    return TokenSequence(x.reshape(b, hp * wp, d), (hp, wp))


class SwinTower(Module):
    """若干 Swin 阶段，阶段之间做 patch merging"""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        dims = config.swin_dims()
        self.out_dim = dims[-1]
        self.stages = ModuleList(
            ModuleList(
                SwinBlock(dims[i], config.num_heads[i], config.window, j % 2 == 1, config.mlp_ratio, rng)
                for j in range(config.swin_depths[i])
            )
            for i in range(len(dims))
        )
        self.merges = ModuleList(PatchMerging(dims[i], rng) for i in range(len(dims) - 1))

    def forward(self, seq: TokenSequence) -> TokenSequence:
        for i, stage in enumerate(self.stages):
            if i > 0:
                seq = self.merges[i - 1](pad_to_even(seq))
            for block in stage:
                seq = block(seq)
        return seq


class SwinHead(Module):
    """LayerNorm -> token 平均 -> 线性层到 head_out 维"""

    def __init__(self, dim, out_dim, rng):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.fc = Linear(dim, out_dim, rng=rng)

    def forward(self, tokens) -> Tensor:
        if isinstance(tokens, TokenSequence):
            tokens = tokens.tokens
        return self.fc(ops.mean(self.norm(tokens), axis=1))


class HybridBranch(Module):
    """
    单个 ConvNeXt-Swin 模型：图像 -> 1000 维特征
    """

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.convnext = ConvNeXt(config, rng)
        self.embed = HybridEmbed(config.stage_widths[-1], config.embed_dim, rng)
        self.tower = SwinTower(config, rng)
        self.head = SwinHead(self.tower.out_dim, config.head_out, rng)

    def forward(self, image: Tensor) -> Tensor:
        return self.head(self.tower(self.embed(self.convnext(image))))


# 函数式入口
def convnext_block(x: Tensor, block: ConvNeXtBlock) -> Tensor:
    return block(x)


def convnext_forward(image: Tensor, convnext: ConvNeXt) -> Tensor:
    return convnext(image)


def hybrid_embed(fmap: Tensor, embed: HybridEmbed) -> TokenSequence:
    return embed(fmap)


def patch_merging(seq: TokenSequence, merge: PatchMerging) -> TokenSequence:
    return merge(seq)


def swin_head(tokens, head: SwinHead) -> Tensor:
    return head(tokens)
