"""
模型工厂模块
负责按预设或配置创建模型、优化器，以及从检查点恢复模型
"""

import logging
from typing import Dict, Optional, Union

import config
from models.config import PRESETS, ModelConfig, preset_config
from models.genconvit import GenConViT, init_params
from services.checkpoint_service import load_checkpoint, restore_model
from tensorcore.optim import Adam

logger = logging.getLogger(__name__)

NET_PREFIXES = {"a": "net_a.", "b": "net_b."}


class ModelFactory:
    @staticmethod
    def create_model(model_config: Union[ModelConfig, str, None] = None, seed: int = 0) -> GenConViT:
        """
        创建模型实例

        参数:
            model_config: ModelConfig，或预设名 "tiny"/"toy"；缺省使用默认预设
            seed (int): 参数初始化种子

        返回:
            GenConViT: 模型实例
        """
        if model_config is None:
            model_config = config.DEFAULT_PRESET
        if isinstance(model_config, str):
            if model_config not in PRESETS:
                logger.warning(f"未知的预设: {model_config}，使用默认预设 {config.DEFAULT_PRESET}")
                model_config = config.DEFAULT_PRESET
            logger.info(f"按预设创建模型: {model_config}")
            model_config = preset_config(model_config)
        return init_params(model_config, seed)

    @staticmethod
    def create_optimizers(model: GenConViT, lr: float = 1e-4, weight_decay: float = 1e-4) -> Dict[str, Adam]:
        """
        为网络 A、B 各建一个独立的 Adam，参数名使用模型内的完整路径

        返回:
            Dict[str, Adam]: {"a": ..., "b": ...}
        """
        return {
            "a": Adam(model.net_a.named_parameters(NET_PREFIXES["a"]), lr=lr, weight_decay=weight_decay),
            "b": Adam(model.net_b.named_parameters(NET_PREFIXES["b"]), lr=lr, weight_decay=weight_decay),
        }

    @staticmethod
    def load_model(checkpoint_path: str, model_config: Optional[ModelConfig] = None) -> GenConViT:
        """
        从检查点恢复模型；给出 model_config 时按该配置建模型再载入（形状不一致会报错）
        """
        checkpoint = load_checkpoint(checkpoint_path)
        model = GenConViT(model_config) if model_config is not None else None
        model = restore_model(checkpoint, model)
        logger.info(f"已从检查点恢复模型: {checkpoint_path} (epoch={checkpoint.epoch})")
        return model
