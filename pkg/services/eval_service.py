"""
评估服务
对某个划分的每个视频调用 predict_video，汇总指标并写出报告、分数表和 ROC

输出（均写在 out_dir 下）:
    report.json   组合/网络 A/网络 B 三份报告，键排序
    scores.csv    video_id,label,score,score_a,score_b
    roc.svg/.csv  组合分数的 ROC（两类都存在时）
"""

import json
import logging
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List

import pandas as pd
from tqdm import tqdm

from datapipe.constants import FRAMES_EVAL, SAMPLE_UNIFORM, SPLIT_TEST, SPLITS
from datapipe.dataset import SampleRecord, filter_split, group_by_video, load_records
from datapipe.loader import load_video_frames
from metrics.classification import DEFAULT_THRESHOLD, evaluate
from metrics.plots import emit_roc_plot
from models.genconvit import GenConViT, predict_video
from utils.csv_utils import read_csv, validate_csv_structure, write_csv
from utils.errors import EXIT_OK, ConfigError, DatasetError, exit_code_for

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
SCORES_FILE = "scores.csv"
ROC_FILE = "roc.svg"
SCORES_COLUMNS = ["video_id", "label", "score", "score_a", "score_b"]


def write_report(report: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def roc_outputs(scores: List[float], labels: List[int], out_dir: str, title: str = "ROC") -> Dict[str, Any]:
    """计算指标并写 ROC 图；单一类别时只返回报告"""
    report = evaluate(scores, labels, DEFAULT_THRESHOLD)
    files = {}
    if report.roc_points:
        files = emit_roc_plot(report.roc_points, os.path.join(out_dir, ROC_FILE), report.auc, title)
    return {"report": report, "files": files}


class EvalService:
    """评估服务类"""

    def __init__(self, model: GenConViT, workers: int = 1, progress: bool = True):
        self.model = model
        self.workers = workers
        self.progress = progress

    def score_videos(self, groups: Dict[str, List[SampleRecord]], n_frames: int = FRAMES_EVAL,
                     mode: str = SAMPLE_UNIFORM, seed: int = 0) -> pd.DataFrame:
        """逐视频预测；多线程时每个视频独立计算，结果按 video_id 排序"""
        cfg = self.model.config
        # 推理模式在进入线程池之前设置
        self.model.eval()

        def score(video_id: str) -> Dict[str, Any]:
            frames = load_video_frames(groups[video_id], n_frames, cfg.image_size,
                                       cfg.norm_mean, cfg.norm_std, mode, seed)
            result = predict_video(frames, self.model)
            return {"video_id": video_id, "label": groups[video_id][0].label, "score": result.video_score,
                    "score_a": result.score_a, "score_b": result.score_b}

        video_ids = sorted(groups)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                rows = list(tqdm(pool.map(score, video_ids), total=len(video_ids), desc="eval",
                                 disable=not self.progress))
        else:
            rows = [score(v) for v in tqdm(video_ids, desc="eval", disable=not self.progress)]
        return pd.DataFrame(rows, columns=SCORES_COLUMNS)

    def evaluate_split(self, data_root: str, out_dir: str, split: str = SPLIT_TEST,
                       split_ratios=None, seed: int = 0, n_frames: int = FRAMES_EVAL,
                       mode: str = SAMPLE_UNIFORM) -> Dict[str, Any]:
        """
        评估某个划分

        参数:
            data_root (str): 数据集根目录（含 manifest.tsv 或 real/fake 子目录）
            out_dir (str): 输出目录
            split (str): train / valid / test

        返回:
            Dict: {"success", "error", "exit_code", "report", "report_path", "scores_path", "roc"}
        """
        try:
            if split not in SPLITS:
                raise ConfigError(f"未知的划分: {split}，可选 {SPLITS}")
            kwargs = {"split_ratios": split_ratios} if split_ratios is not None else {}
            records = load_records(data_root, seed=seed, **kwargs)
            groups = group_by_video(filter_split(records, split))
            if not groups:
                raise DatasetError(f"划分 {split} 中没有视频")
            logger.info(f"评估划分 {split}: {len(groups)} 个视频")

            df = self.score_videos(groups, n_frames, mode, seed)
            scores_path = write_csv(df, os.path.join(out_dir, SCORES_FILE))
            labels = df["label"].astype(int).tolist()

            combined = roc_outputs(df["score"].tolist(), labels, out_dir)
            report = {
                "split": split,
                "videos": len(df),
                "threshold": DEFAULT_THRESHOLD,
                "combined": combined["report"].to_dict(),
                "net_a": evaluate(df["score_a"].tolist(), labels).to_dict(),
                "net_b": evaluate(df["score_b"].tolist(), labels).to_dict(),
            }
            report_path = write_report(report, os.path.join(out_dir, REPORT_FILE))
            return {
                "success": True,
                "error": "",
                "exit_code": EXIT_OK,
                "report": report,
                "report_path": report_path,
                "scores_path": scores_path,
                "roc": combined["files"],
            }
        except Exception as e:
            logger.error(f"评估失败: {e}")
            logger.debug(traceback.format_exc())
            return {"success": False, "error": str(e), "exit_code": exit_code_for(e)}


def roc_from_scores(scores_csv: str, out_dir: str, column: str = "score") -> Dict[str, Any]:
    """
    由 eval 写出的 scores.csv 重新计算 ROC/AUC 并输出图和点表

    返回:
        Dict: {"success", "error", "exit_code", "auc", "roc"}
    """
    try:
        df = read_csv(scores_csv)
        if df is None:
            raise FileNotFoundError(f"分数文件不存在: {scores_csv}")
        ok, message = validate_csv_structure(df, ["label", column])
        if not ok:
            raise ConfigError(message)
        out = roc_outputs(df[column].astype(float).tolist(), df["label"].astype(int).tolist(), out_dir)
        report = out["report"]
        if report.auc is None:
            raise DatasetError("分数文件中只有一个类别，无法计算 ROC")
        return {"success": True, "error": "", "exit_code": EXIT_OK, "auc": report.auc,
                "report": report.to_dict(), "roc": out["files"]}
    except Exception as e:
        logger.error(f"ROC 计算失败: {e}")
        logger.debug(traceback.format_exc())
        return {"success": False, "error": str(e), "exit_code": exit_code_for(e)}
