"""
模型包
GenConViT 的生成分支、ConvNeXt-Swin 主干和两个网络
"""

from models.config import BackboneConfig, ModelConfig, preset_config
from models.genconvit import (
    GenConViT,
    NetworkBOutput,
    PredictionResult,
    init_params,
    loss_a,
    loss_b,
    network_a_forward,
    network_b_forward,
    predict_video,
)

__all__ = [
    "BackboneConfig",
    "ModelConfig",
    "preset_config",
    "GenConViT",
    "NetworkBOutput",
    "PredictionResult",
    "init_params",
    "loss_a",
    "loss_b",
    "network_a_forward",
    "network_b_forward",
    "predict_video",
]
