"""
模型配置
ModelConfig/BackboneConfig 以及 tiny、toy 两个预设
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Tuple

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

PRESETS = ("tiny", "toy")


@dataclass
class BackboneConfig:
    """ConvNeXt + HybridEmbed + Swin 塔的结构参数"""

    stem_patch: int = 4
    stage_depths: Tuple[int, ...] = (3, 3, 9, 3)
    stage_widths: Tuple[int, ...] = (96, 192, 384, 768)
    embed_dim: int = 768
    window: int = 7
    swin_depths: Tuple[int, ...] = (4,)
    num_heads: Tuple[int, ...] = (24,)
    mlp_ratio: int = 4
    head_out: int = 1000

    def swin_dims(self) -> List[int]:
        """每个 Swin 阶段的通道数，patch merging 后翻倍"""
        return [self.embed_dim * 2 ** i for i in range(len(self.swin_depths))]

    def problems(self, image_size: int) -> List[str]:
        out = []
        if len(self.stage_depths) != len(self.stage_widths) or not self.stage_depths:
            out.append("stage_depths 与 stage_widths 长度必须相同且非空")
        if len(self.swin_depths) != len(self.num_heads) or not self.swin_depths:
            out.append("swin_depths 与 num_heads 长度必须相同且非空")
        if self.stem_patch < 1 or self.window < 1 or self.mlp_ratio < 1 or self.head_out < 1:
            out.append("stem_patch/window/mlp_ratio/head_out 必须为正")
        if any(d < 1 for d in self.stage_depths + self.swin_depths):
            out.append("各阶段深度必须为正")
        stride = self.stem_patch * 2 ** max(len(self.stage_widths) - 1, 0)
        if stride and image_size % stride:
            out.append(f"输入尺寸 {image_size} 不能被 ConvNeXt 总步长 {stride} 整除")
        for dim, heads in zip(self.swin_dims(), self.num_heads):
            if heads < 1 or dim % heads:
                out.append(f"Swin 维度 {dim} 不能被头数 {heads} 整除")
        return out


@dataclass
class ModelConfig:
    """
    GenConViT 的全部结构超参数
    空间尺寸按 image_size 等比例缩放，tiny 预设对应 224 输入的完整结构
    """

    preset: str = "tiny"
    image_size: int = 224
    ae_channels: Tuple[int, ...] = (3, 16, 32, 64, 128, 256)
    vae_enc_channels: Tuple[int, ...] = (3, 16, 32, 64, 128)
    vae_dec_channels: Tuple[int, ...] = (256, 64, 32, 16, 3)
    vae_dec_linear: bool = True
    leaky_slope: float = 0.01
    norm_mean: Tuple[float, ...] = (0.5, 0.5, 0.5)
    norm_std: Tuple[float, ...] = (0.5, 0.5, 0.5)
    mse_weight: float = 1.0
    kl_weight: float = 0.0
    num_classes: int = 2
    backbone: BackboneConfig = field(default_factory=BackboneConfig)

    # 派生尺寸
    @property
    def ae_latent_size(self) -> int:
        return self.image_size // 2 ** (len(self.ae_channels) - 1)

    @property
    def vae_enc_size(self) -> int:
        return self.image_size // 2 ** (len(self.vae_enc_channels) - 1)

    @property
    def vae_flat_dim(self) -> int:
        return self.vae_enc_channels[-1] * self.vae_enc_size ** 2

    @property
    def vae_latent_grid(self) -> int:
        return self.image_size // 2 ** len(self.vae_dec_channels)

    @property
    def vae_latent_dim(self) -> int:
        return self.vae_dec_channels[0] * self.vae_latent_grid ** 2

    @property
    def recon_size(self) -> int:
        return self.image_size // 2

    @property
    def feature_dim(self) -> int:
        return self.backbone.head_out

    def validate(self) -> "ModelConfig":
        """
        检查配置，一次列出所有问题

        异常:
            ConfigError: 配置无效
        """
        problems = []
        s = self.image_size
        if self.preset not in PRESETS:
            problems.append(f"未知预设 {self.preset}，可选 {PRESETS}")
        if s < 2:
            problems.append(f"image_size 过小: {s}")
        if self.ae_channels[0] != 3 or len(self.ae_channels) < 2:
            problems.append("ae_channels 必须以 3 开头且至少两项")
        if self.vae_enc_channels[0] != 3 or len(self.vae_enc_channels) < 2:
            problems.append("vae_enc_channels 必须以 3 开头且至少两项")
        if self.vae_dec_channels[-1] != 3 or len(self.vae_dec_channels) < 2:
            problems.append("vae_dec_channels 必须以 3 结尾且至少两项")
        for name, depth in (("AE", len(self.ae_channels) - 1),
                            ("VAE 编码器", len(self.vae_enc_channels) - 1),
                            ("VAE 解码器", len(self.vae_dec_channels))):
            if s % 2 ** depth:
                problems.append(f"输入尺寸 {s} 不能被 {name} 的下采样倍数 {2 ** depth} 整除")
        if len(self.norm_mean) != 3 or len(self.norm_std) != 3 or any(v <= 0 for v in self.norm_std):
            problems.append("norm_mean/norm_std 必须是三个值且 std > 0")
        if self.mse_weight < 0 or self.kl_weight < 0:
            problems.append("mse_weight/kl_weight 不能为负")
        if self.num_classes != 2:
            problems.append("num_classes 固定为 2")
        problems.extend(self.backbone.problems(s))
        if problems:
            raise ConfigError("模型配置无效:\n  " + "\n  ".join(problems))
        return self

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        data = dict(data)
        backbone = _build(BackboneConfig, data.pop("backbone", {}) or {}, "model.backbone")
        config = _build(cls, data, "model")
        config.backbone = backbone
        return config


def _plain(value):
    """tuple 转 list，便于 JSON 序列化"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _build(cls, data: Dict[str, Any], section: str):
    """按 dataclass 字段构造，未知键报错，list 转回 tuple"""
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{section} 中有未知配置项: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)


def preset_config(name: str) -> ModelConfig:
    """
    获取预设配置

    参数:
        name (str): tiny（224 输入，ConvNeXt-T 宽度）或 toy（64 输入，缩小宽度）

    返回:
        ModelConfig: 已校验的配置
    """
    if name == "tiny":
        return ModelConfig().validate()
    if name == "toy":
        return ModelConfig(
            preset="toy",
            image_size=64,
            ae_channels=(3, 8, 16, 32, 64, 128),
            vae_enc_channels=(3, 8, 16, 32, 64),
            vae_dec_channels=(128, 32, 16, 8, 3),
            backbone=BackboneConfig(
                stage_depths=(1, 1, 2, 1),
                stage_widths=(16, 32, 64, 128),
                embed_dim=64,
                window=7,
                swin_depths=(2,),
                num_heads=(2,),
            ),
        ).validate()
    raise ConfigError(f"未知预设 {name}，可选 {PRESETS}")
