"""
GenConViT 组装
网络 A（AE + 两个 ConvNeXt-Swin 分支）、网络 B（VAE + 两个分支）、损失和视频级预测
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from models.backbone import HybridBranch
from models.config import ModelConfig
from models.generative import Autoencoder, VariationalAutoencoder, kl_divergence, reparameterize
from tensorcore import ops
from tensorcore.nn import Linear, Module
from tensorcore.tensor import Tensor, as_tensor, no_grad
from utils.errors import EmptyFrameListError, ShapeMismatchError

logger = logging.getLogger(__name__)

REAL = 0
FAKE = 1
VERDICT_THRESHOLD = 0.5
NETS = ("a", "b", "both")


class NetworkA(Module):
    """AE 重建 I_A 与原图分别进入两个独立分支，特征拼接后线性分类"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.ae = Autoencoder(config, rng)
        self.branch_img = HybridBranch(config.backbone, rng)
        self.branch_latent = HybridBranch(config.backbone, rng)
        self.head = Linear(2 * config.feature_dim, config.num_classes, rng=rng)

    def forward(self, image: Tensor) -> Tensor:
        recon = self.ae(image)
        feats = ops.concat([self.branch_img(image), self.branch_latent(recon)], axis=-1)
        return self.head(feats)


@dataclass
class NetworkBOutput:
    logits: Tensor
    recon: Tensor
    mu: Tensor
    logvar: Tensor


class NetworkB(Module):
    """VAE 重建 I_B（S/2），双线性放大到 S 后进入潜变量分支"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.image_size = config.image_size
        self.vae = VariationalAutoencoder(config, rng)
        self.branch_img = HybridBranch(config.backbone, rng)
        self.branch_latent = HybridBranch(config.backbone, rng)
        self.head = Linear(2 * config.feature_dim, config.num_classes, rng=rng)

    def forward(self, image: Tensor, rng: Optional[np.random.Generator] = None,
                eps: Optional[np.ndarray] = None) -> NetworkBOutput:
        mu, logvar = self.vae.encode(image)
        z = reparameterize(mu, logvar, rng=rng, eps=eps)
        recon = self.vae.decode(z)
        upsampled = ops.resize_bilinear(recon, self.image_size, self.image_size)
        feats = ops.concat([self.branch_img(image), self.branch_latent(upsampled)], axis=-1)
        return NetworkBOutput(self.head(feats), recon, mu, logvar)


class GenConViT(Module):
    """两个独立训练的网络 A、B"""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.net_a = NetworkA(config, np.random.default_rng([seed, 0]))
        self.net_b = NetworkB(config, np.random.default_rng([seed, 1]))

    def count_parameters(self) -> Dict[str, int]:
        """各部分参数量"""
        counts = {}
        for net_name in ("net_a", "net_b"):
            net = getattr(self, net_name)
            for part, module in net.children():
                counts[f"{net_name}.{part}"] = module.num_parameters()
            counts[net_name] = net.num_parameters()
        counts["total"] = counts["net_a"] + counts["net_b"]
        return counts


def init_params(config: ModelConfig, seed: int) -> GenConViT:
    """
    按配置和种子初始化全部参数

    参数:
        config (ModelConfig): 模型配置，先做校验
        seed (int): 随机种子，相同种子得到相同参数

    返回:
        GenConViT: 初始化好的模型（训练模式）
    """
    config.validate()
    model = GenConViT(config, seed)
    logger.info("初始化模型: preset=%s image_size=%d 参数量=%d",
                config.preset, config.image_size, model.count_parameters()["total"])
    return model


def network_a_forward(image: Tensor, model: GenConViT) -> Tensor:
    return model.net_a(image)


def network_b_forward(image: Tensor, model: GenConViT, rng: Optional[np.random.Generator] = None,
                      eps: Optional[np.ndarray] = None) -> NetworkBOutput:
    return model.net_b(image, rng=rng, eps=eps)


def loss_a(logits: Tensor, labels) -> Tensor:
    return ops.cross_entropy(logits, labels)


def reconstruction_target(image: Tensor, size: int, norm_mean: Sequence[float],
                          norm_std: Sequence[float]) -> Tensor:
    """把标准化后的输入还原到 [0, 1] 并缩放到重建尺寸"""
    shape = (1, 3, 1, 1)
    std = as_tensor(np.asarray(norm_std, dtype=image.dtype).reshape(shape))
    mean = as_tensor(np.asarray(norm_mean, dtype=image.dtype).reshape(shape))
    return ops.resize_bilinear(image * std + mean, size, size)


@dataclass
class LossTerms:
    total: Tensor
    ce: Tensor
    mse: Tensor
    kl: Optional[Tensor] = None


def loss_b_terms(logits: Tensor, labels, recon: Tensor, image: Tensor,
                 mu: Optional[Tensor] = None, logvar: Optional[Tensor] = None,
                 mse_weight: float = 1.0, kl_weight: float = 0.0,
                 norm_mean: Sequence[float] = (0.5, 0.5, 0.5),
                 norm_std: Sequence[float] = (0.5, 0.5, 0.5)) -> LossTerms:
    """
    网络 B 的损失：CE + λ·MSE(recon, 还原后的输入) + β·KL

    返回:
        LossTerms: 总损失以及各项
    """
    if recon.ndim != 4 or image.ndim != 4 or recon.shape[2] * 2 != image.shape[2]:
        raise ShapeMismatchError(f"loss_b: 重建 {recon.shape} 应为输入 {image.shape} 的一半尺寸")
    ce = ops.cross_entropy(logits, labels)
    target = reconstruction_target(image, recon.shape[2], norm_mean, norm_std)
    mse = ops.mse(recon, target)
    total = ce + mse * mse_weight
    kl = None
    if kl_weight and mu is not None and logvar is not None:
        kl = kl_divergence(mu, logvar)
        total = total + kl * kl_weight
    return LossTerms(total, ce, mse, kl)


def loss_b(logits: Tensor, labels, recon: Tensor, image: Tensor, **kwargs) -> Tensor:
    return loss_b_terms(logits, labels, recon, image, **kwargs).total


@dataclass
class PredictionResult:
    """单个视频的预测结果"""

    per_frame_a: List[float] = field(default_factory=list)
    per_frame_b: List[float] = field(default_factory=list)
    video_score: float = 0.0
    verdict: str = "REAL"
    frames_used: int = 0
    score_a: Optional[float] = None
    score_b: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def _mean(values: List[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def _split_frames(frames: Iterable) -> List[np.ndarray]:
    """把单帧 (3,S,S) 与批量 (k,3,S,S) 混合的输入拆成单帧列表"""
    out = []
    for frame in frames:
        arr = frame.data if isinstance(frame, Tensor) else np.asarray(frame)
        if arr.ndim == 4:
            out.extend(arr[i] for i in range(arr.shape[0]))
        elif arr.ndim == 3:
            out.append(arr)
        else:
            raise ShapeMismatchError(f"帧的形状应为 (3,S,S) 或 (k,3,S,S)，实际 {arr.shape}")
    return out


def fake_probability(logits: Tensor) -> float:
    return float(ops.softmax(logits, axis=-1).data[0, FAKE])


def predict_video(frames: Iterable, model: GenConViT, net: str = "both",
                  threshold: float = VERDICT_THRESHOLD) -> PredictionResult:
    """
    视频级预测：逐帧前向，两个网络的 FAKE 概率取全局平均

    参数:
        frames: 预处理后的帧，单帧或批量数组均可
        model (GenConViT): 模型，会被切换到推理模式
        net (str): a / b / both
        threshold (float): 分数不小于该值判为 FAKE

    返回:
        PredictionResult: 逐帧概率、视频分数与判定

    异常:
        EmptyFrameListError: 没有任何帧
    """
    if net not in NETS:
        raise ValueError(f"net 必须是 {NETS} 之一，实际 {net}")
    singles = _split_frames(frames)
    if not singles:
        raise EmptyFrameListError("视频没有可用的帧")

    model.eval()
    dtype = model.net_a.head.weight.dtype
    result = PredictionResult(frames_used=len(singles))
    with no_grad():
        # 逐帧前向：结果与帧的顺序和分批方式无关
        for frame in singles:
            x = Tensor(np.asarray(frame, dtype=dtype)[None])
            if net in ("a", "both"):
                result.per_frame_a.append(fake_probability(model.net_a(x)))
            if net in ("b", "both"):
                result.per_frame_b.append(fake_probability(model.net_b(x).logits))

    result.score_a = _mean(result.per_frame_a)
    result.score_b = _mean(result.per_frame_b)
    result.video_score = _mean(result.per_frame_a + result.per_frame_b)
    result.verdict = "FAKE" if result.video_score >= threshold else "REAL"
    return result
