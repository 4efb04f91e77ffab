"""
数据集扫描与清单
按 real/fake 目录扫描视频帧，按视频做确定性划分，读写 manifest.tsv
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import pandas as pd

from datapipe.constants import (
    CLASS_DIRS,
    MANIFEST_NAME,
    DEFAULT_SPLIT_RATIOS,
    MANIFEST_COLUMNS,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VALID,
    SPLITS,
)
from utils.errors import DatasetError, EmptyClassError
from utils.file_utils import list_image_files

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleRecord:
    """一帧带标签的人脸图片"""

    path: str
    label: int
    video_id: str
    split: str


def _split_key(seed: int, name: str) -> str:
    return hashlib.sha256(f"{seed}:{name}".encode("utf-8")).hexdigest()


def assign_splits(names: Sequence[str], ratios=DEFAULT_SPLIT_RATIOS, seed: int = 0) -> Dict[str, str]:
    """
    按哈希排序后依比例切分

    参数:
        names: 同一类别下的视频名
        ratios: (train, valid, test) 比例
        seed (int): 随机种子

    返回:
        Dict[str, str]: 视频名 -> 划分
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise DatasetError(f"划分比例无效: {ratios}")
    ranked = sorted(names, key=lambda n: (_split_key(seed, n), n))
    n = len(ranked)
    n_train = min(round(ratios[0] * n), n)
    n_valid = min(round(ratios[1] * n), n - n_train)
    out = {}
    for i, name in enumerate(ranked):
        if i < n_train:
            out[name] = SPLIT_TRAIN
        elif i < n_train + n_valid:
            out[name] = SPLIT_VALID
        else:
            out[name] = SPLIT_TEST
    return out


def scan_dataset(root: str, split_ratios=DEFAULT_SPLIT_RATIOS, seed: int = 0,
                 warnings: Optional[List[str]] = None) -> List[SampleRecord]:
    """
    扫描 root/{real,fake}/<video>/<frame> 目录

    视频名（不含类别前缀）参与哈希，同名的真假视频落在同一划分里；
    video_id 带类别前缀，例如 fake/vid_0003

    参数:
        root (str): 数据集根目录
        split_ratios: (train, valid, test) 比例
        seed (int): 划分种子
        warnings (list): 可选，收集无法读取的文件路径

    返回:
        List[SampleRecord]: 按类别、视频、帧名排序的记录

    异常:
        EmptyClassError: 某个类别没有任何包含图片的视频
    """
    records: List[SampleRecord] = []
    for class_dir, label in CLASS_DIRS.items():
        class_root = os.path.join(root, class_dir)
        videos = {}
        if os.path.isdir(class_root):
            for name in sorted(os.listdir(class_root)):
                video_dir = os.path.join(class_root, name)
                if not os.path.isdir(video_dir):
                    continue
                frames = []
                for path in list_image_files(video_dir):
                    if os.path.getsize(path) == 0 or not os.access(path, os.R_OK):
                        logger.warning(f"无法读取的图片: {path}")
                        if warnings is not None:
                            warnings.append(path)
                        continue
                    frames.append(path)
                if frames:
                    videos[name] = frames
        if not videos:
            raise EmptyClassError(f"类别 {class_dir} 下没有任何视频: {class_root}")

        splits = assign_splits(list(videos), split_ratios, seed)
        for name, frames in videos.items():
            video_id = f"{class_dir}/{name}"
            records.extend(SampleRecord(path, label, video_id, splits[name]) for path in frames)
        logger.info(f"扫描 {class_dir}: {len(videos)} 个视频")
    return records


def group_by_video(records: Sequence[SampleRecord]) -> Dict[str, List[SampleRecord]]:
    """video_id -> 该视频的帧记录（保持原有顺序）"""
    groups: Dict[str, List[SampleRecord]] = {}
    for record in records:
        groups.setdefault(record.video_id, []).append(record)
    return groups


def filter_split(records: Sequence[SampleRecord], split: str) -> List[SampleRecord]:
    if split not in SPLITS:
        raise DatasetError(f"未知的数据划分: {split}")
    return [r for r in records if r.split == split]


def write_manifest(records: Sequence[SampleRecord], path: str) -> str:
    """
    写出清单：制表符分隔、无表头，路径相对于清单所在目录

    返回:
        str: 清单路径
    """
    base = os.path.dirname(os.path.abspath(path))
    rows = [
        (os.path.relpath(os.path.abspath(r.path), base).replace(os.sep, "/"), r.label, r.video_id, r.split)
        for r in records
    ]
    df = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    df.to_csv(path, sep="\t", header=False, index=False, lineterminator="\n")
    logger.info(f"写出清单 {path}: {len(df)} 条记录")
    return path


def read_manifest(path: str) -> List[SampleRecord]:
    """读取清单，路径还原为绝对路径"""
    if not os.path.isfile(path):
        raise DatasetError(f"清单不存在: {path}")
    base = os.path.dirname(os.path.abspath(path))
    df = pd.read_csv(path, sep="\t", header=None, names=MANIFEST_COLUMNS,
                     dtype={"path": str, "label": int, "video_id": str, "split": str},
                     keep_default_na=False)
    bad = sorted(set(df["split"]) - set(SPLITS))
    if bad:
        raise DatasetError(f"清单中有未知的划分: {bad}")
    return [
        SampleRecord(os.path.normpath(os.path.join(base, row.path)), int(row.label), row.video_id, row.split)
        for row in df.itertuples(index=False)
    ]


def summarize(records: Sequence[SampleRecord]) -> pd.DataFrame:
    """按划分和类别统计视频数与帧数"""
    if not records:
        return pd.DataFrame(columns=["split", "label", "videos", "frames"])
    df = pd.DataFrame([r.__dict__ for r in records])
    return (df.groupby(["split", "label"])
              .agg(videos=("video_id", "nunique"), frames=("path", "count"))
              .reset_index())


def load_records(root: str, split_ratios=DEFAULT_SPLIT_RATIOS, seed: int = 0) -> List[SampleRecord]:
    """
    读取 root 下的清单；没有清单时扫描目录

    异常:
        DatasetError: 目录不存在或某个类别为空
    """
    manifest = os.path.join(root, MANIFEST_NAME)
    if os.path.isfile(manifest):
        return read_manifest(manifest)
    if not os.path.isdir(root):
        raise DatasetError(f"数据目录不存在: {root}")
    return scan_dataset(root, split_ratios, seed)
