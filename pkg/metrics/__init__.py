"""
评估指标
混淆矩阵、准确率/F1、ROC/AUC 以及 ROC 图输出
"""

from metrics.classification import (
    ConfusionCounts,
    EvalReport,
    accuracy,
    confusion,
    evaluate,
    f1_score,
    per_class_accuracy,
    precision,
    recall,
)
from metrics.plots import emit_roc_plot
from metrics.roc import auc, auc_pairwise, roc_curve

__all__ = [
    "ConfusionCounts",
    "EvalReport",
    "accuracy",
    "confusion",
    "evaluate",
    "f1_score",
    "per_class_accuracy",
    "precision",
    "recall",
    "emit_roc_plot",
    "auc",
    "auc_pairwise",
    "roc_curve",
]
