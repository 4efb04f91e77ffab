"""
分类指标
以 FAKE(标签 1) 为正类：分数 >= 阈值判为 FAKE
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import LengthMismatchError, LabelRangeError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def check_inputs(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """转成数组并校验长度和标签取值"""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(s) != len(y):
        raise LengthMismatchError(f"分数与标签长度不一致: {len(s)} != {len(y)}")
    if y.size and not np.isin(y, (0, 1)).all():
        raise LabelRangeError(f"标签只能是 0 或 1: {sorted(set(y.tolist()))}")
    return s, y.astype(np.int64)


def confusion(scores: Sequence[float], labels: Sequence[int],
              threshold: float = DEFAULT_THRESHOLD) -> ConfusionCounts:
    """
    计算混淆矩阵

    参数:
        scores: 每个样本为 FAKE 的概率
        labels: 0=REAL, 1=FAKE
        threshold: 判为 FAKE 的阈值（含）

    返回:
        ConfusionCounts
    """
    s, y = check_inputs(scores, labels)
    pred = s >= threshold
    pos = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def accuracy(counts: ConfusionCounts) -> float:
    return (counts.tp + counts.tn) / counts.total if counts.total else 0.0


def precision(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fp
    return counts.tp / denom if denom else 0.0


def recall(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fn
    return counts.tp / denom if denom else 0.0


def f1_score(counts: ConfusionCounts) -> float:
    """分母为零（没有预测正例或没有真实正例）时记为 0 并告警"""
    if counts.tp + counts.fp == 0 or counts.tp + counts.fn == 0:
        logger.warning(f"F1 无定义，记为 0: {counts.to_dict()}")
        return 0.0
    p, r = precision(counts), recall(counts)
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def per_class_accuracy(counts: ConfusionCounts) -> Dict[str, Optional[float]]:
    """每个类别被判对的比例（即该类别的召回率），类别缺席时为 None"""
    real = counts.tn + counts.fp
    fake = counts.tp + counts.fn
    return {
        "real": counts.tn / real if real else None,
        "fake": counts.tp / fake if fake else None,
    }


@dataclass
class EvalReport:
    confusion: ConfusionCounts
    accuracy: float
    per_class_accuracy: Dict[str, Optional[float]]
    precision: float
    recall: float
    f1: float
    auc: Optional[float] = None
    roc_points: List[Tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self, include_points: bool = False) -> Dict:
        data = {
            "confusion": self.confusion.to_dict(),
            "accuracy": self.accuracy,
            "per_class_accuracy": dict(self.per_class_accuracy),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "samples": self.confusion.total,
        }
        if include_points:
            data["roc_points"] = [list(p) for p in self.roc_points]
        return data


def evaluate(scores: Sequence[float], labels: Sequence[int],
             threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    """
    汇总所有指标；只有一个类别时 AUC 与 ROC 省略并告警
    """
    from metrics.roc import auc as roc_auc, roc_curve

    counts = confusion(scores, labels, threshold)
    report = EvalReport(
        confusion=counts,
        accuracy=accuracy(counts),
        per_class_accuracy=per_class_accuracy(counts),
        precision=precision(counts),
        recall=recall(counts),
        f1=f1_score(counts),
    )
    y = np.asarray(labels)
    if y.size and 0 < int(np.sum(y == 1)) < y.size:
        report.roc_points = roc_curve(scores, labels)
        report.auc = roc_auc(scores, labels)
    else:
        logger.warning("评估集只有一个类别，省略 AUC 与 ROC")
    return report
