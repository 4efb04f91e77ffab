"""
测试辅助
8×8 输入的微型模型配置与合并抽样的梯度检查
"""

from typing import Callable, Sequence

import numpy as np

from models.config import BackboneConfig, ModelConfig
from tensorcore.gradcheck import max_relative_error, numerical_gradient
from tensorcore.tensor import Tensor, backward


def micro_config(**overrides) -> ModelConfig:
    """每个网络只有几百个参数的配置，用于全网络梯度检查和端到端训练"""
    backbone = BackboneConfig(
        stem_patch=2,
        stage_depths=(1, 1),
        stage_widths=(4, 8),
        embed_dim=8,
        window=2,
        swin_depths=(1, 1),
        num_heads=(2, 2),
        mlp_ratio=2,
        head_out=4,
    )
    values = dict(
        preset="toy",
        image_size=8,
        ae_channels=(3, 2, 2),
        vae_enc_channels=(3, 2, 2),
        vae_dec_channels=(2, 2, 3),
        backbone=backbone,
    )
    values.update(overrides)
    return ModelConfig(**values).validate()


def pooled_gradient_error(fn: Callable[[], Tensor], tensors: Sequence[Tensor], sample: int = 2,
                          seed: int = 0, h: float = 1e-5) -> float:
    """
    每个张量抽查 sample 个元素，所有抽查值合在一起算一个相对误差
    梯度很小的张量不会单独放大差分噪声
    """
    grads = backward(fn(), params=tensors)
    rng = np.random.default_rng(seed)
    analytic, numeric = [], []
    for tensor in tensors:
        idx = np.sort(rng.choice(tensor.size, size=min(sample, tensor.size), replace=False))
        analytic.append(grads.of(tensor).reshape(-1)[idx])
        numeric.append(numerical_gradient(fn, tensor, h, indices=idx).reshape(-1)[idx])
    return max_relative_error(np.concatenate(analytic), np.concatenate(numeric))
