"""
服务模块
提供合成数据、训练、评估、预测、检查点和模型创建功能
"""

from services.model_factory import ModelFactory
from services.synth_service import SynthService
from services.train_service import TrainService
from services.eval_service import EvalService, roc_from_scores
from services.predict_service import PredictService

__all__ = [
    'ModelFactory',
    'SynthService',
    'TrainService',
    'EvalService',
    'roc_from_scores',
    'PredictService'
]
