"""
ROC 曲线与 AUC
梯形面积用整数分子计算，与成对 (Mann-Whitney) 统计量逐位相等
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from metrics.classification import check_inputs
from utils.errors import SingleClassError

logger = logging.getLogger(__name__)

RocPoint = Tuple[float, float, float]


def _class_counts(y: np.ndarray) -> Tuple[int, int]:
    positives = int(np.sum(y == 1))
    negatives = int(y.size - positives)
    if positives == 0 or negatives == 0:
        raise SingleClassError(f"ROC 需要两个类别都出现: P={positives}, N={negatives}")
    return positives, negatives


def roc_counts(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    阈值从 +inf 开始，依次取降序的唯一分数；返回每个阈值下 score >= t 的 (fp, tp) 计数

    返回:
        (thresholds, fps, tps)
    """
    s, y = check_inputs(scores, labels)
    _class_counts(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # 每组相同分数的最后一个位置
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    thresholds = np.r_[np.inf, s[last]]
    return thresholds, np.r_[0, fps].astype(np.int64), np.r_[0, tps].astype(np.int64)


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> List[RocPoint]:
    """
    计算 ROC 曲线

    参数:
        scores: FAKE 概率
        labels: 0/1 标签，两类都必须出现

    返回:
        List[(fpr, tpr, threshold)]: 从 (0,0,inf) 单调到 (1,1,min(score))

    异常:
        SingleClassError: 只有一个类别
    """
    thresholds, fps, tps = roc_counts(scores, labels)
    p, n = int(tps[-1]), int(fps[-1])
    return [(int(fp) / n, int(tp) / p, float(t)) for fp, tp, t in zip(fps, tps, thresholds)]


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    ROC 曲线下的梯形面积

    分子 Σ(fp_i - fp_{i-1})(tp_i + tp_{i-1}) 是整数，除以 2PN 一次得到结果，
    并列分数按半数计入
    """
    _, fps, tps = roc_counts(scores, labels)
    twice_area = sum(int(dx) * int(h) for dx, h in zip(np.diff(fps), tps[1:] + tps[:-1]))
    return twice_area / (2 * int(tps[-1]) * int(fps[-1]))


def auc_pairwise(scores: Sequence[float], labels: Sequence[int]) -> float:
    """P(score_fake > score_real) + ½P(相等)，逐对枚举"""
    s, y = check_inputs(scores, labels)
    p, n = _class_counts(y)
    fake = s[y == 1][:, None]
    real = s[y == 0][None, :]
    twice_wins = 2 * int(np.sum(fake > real)) + int(np.sum(fake == real))
    return twice_wins / (2 * p * n)


def auc_from_points(points: Sequence[RocPoint]) -> float:
    """直接对已有的 ROC 点做梯形积分"""
    fpr = np.array([p[0] for p in points], dtype=np.float64)
    tpr = np.array([p[1] for p in points], dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
