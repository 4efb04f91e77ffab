"""
ROC 图输出
用 matplotlib (Agg) 画静态 SVG，并在同目录写出同名 CSV
"""

import logging
import os
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from metrics.roc import RocPoint, auc_from_points  # noqa: E402
from utils.csv_utils import write_csv  # noqa: E402

logger = logging.getLogger(__name__)

ROC_COLUMNS = ["fpr", "tpr", "threshold"]

# 固定 hashsalt 和去掉日期后，同样的点得到逐字节相同的 SVG；文字保留为 <text>
SVG_STYLE = {
    "svg.hashsalt": "genconvit-roc",
    "svg.fonttype": "none",
}
FIGSIZE = (4.0, 4.0)
CURVE_ID = "roc-curve"


def write_roc_csv(points: Sequence[RocPoint], path: str) -> str:
    df = pd.DataFrame([list(p) for p in points], columns=ROC_COLUMNS)
    return write_csv(df, path)


def save_roc_svg(points: Sequence[RocPoint], auc_value: float, out_path: str, title: str = "ROC") -> str:
    """画 ROC 折线、对角参考线和 AUC 图例，保存为 SVG"""
    fpr = [p[0] for p in points]
    tpr = [p[1] for p in points]
    with plt.rc_context(SVG_STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        try:
            ax.plot([0.0, 1.0], [0.0, 1.0], linestyle="--", color="gray", linewidth=1)
            ax.plot(fpr, tpr, color="#c0392b", linewidth=2, label=f"AUC = {auc_value:.4f}", gid=CURVE_ID)
            ax.set_xlim(0.0, 1.0)
            ax.set_ylim(0.0, 1.0)
            ax.set_xlabel("False positive rate")
            ax.set_ylabel("True positive rate")
            ax.set_title(title)
            ax.legend(loc="lower right")
            fig.savefig(out_path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return out_path


def emit_roc_plot(points: Sequence[RocPoint], out_path: str, auc_value: Optional[float] = None,
                  title: str = "ROC") -> Dict[str, str]:
    """
    写出 ROC 图 (SVG) 和同名的点表 CSV

    参数:
        points: roc_curve 的结果，至少两个点
        out_path: SVG 路径；CSV 写到同目录下同名 .csv
        auc_value: 标注的 AUC，缺省时由点做梯形积分

    返回:
        Dict: {"svg": 路径, "csv": 路径}
    """
    if len(points) < 2:
        raise ValueError(f"ROC 图至少需要两个点: {len(points)}")
    if auc_value is None:
        auc_value = auc_from_points(points)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    save_roc_svg(points, auc_value, out_path, title)
    csv_path = os.path.splitext(out_path)[0] + ".csv"
    write_roc_csv(points, csv_path)
    logger.info(f"ROC 图已写出: {out_path}")
    return {"svg": out_path, "csv": csv_path}
