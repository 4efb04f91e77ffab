"""
视频帧采样
从一个视频目录中按均匀/开头/随机方式选取帧，并读取为 RGB 数组
"""

import logging
from typing import List, Sequence

import numpy as np
from PIL import Image

from datapipe.constants import SAMPLE_FIRST, SAMPLE_MODES, SAMPLE_RANDOM, SAMPLE_UNIFORM
from utils.errors import DatasetError, EmptyDirectoryError
from utils.file_utils import list_image_files

logger = logging.getLogger(__name__)


def load_image(path: str) -> np.ndarray:
    """
    读取图片为 H×W×3 的 uint8 RGB 数组

    参数:
        path (str): PNG/JPEG 文件路径

    返回:
        np.ndarray: RGB 图像
    """
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def save_image(image: np.ndarray, path: str) -> None:
    """把 uint8 RGB 数组写成 PNG/JPEG（由扩展名决定）"""
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path)


def frame_indices(total: int, n: int, mode: str = SAMPLE_UNIFORM, seed: int = 0) -> List[int]:
    """
    选出帧下标

    参数:
        total (int): 视频帧数
        n (int): 需要的帧数；total 不足 n 时返回全部
        mode (str): uniform 取 floor(i·total/n)；first 取前 n 帧；random 随机取 n 帧后按时间排序
        seed (int): random 模式的种子

    返回:
        List[int]: 递增的帧下标
    """
    if mode not in SAMPLE_MODES:
        raise DatasetError(f"未知的采样模式: {mode}")
    if n < 1:
        raise DatasetError(f"采样帧数必须为正: {n}")
    if total <= n:
        return list(range(total))
    if mode == SAMPLE_UNIFORM:
        return [i * total // n for i in range(n)]
    if mode == SAMPLE_FIRST:
        return list(range(n))
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(total, size=n, replace=False))


def select_frames(paths: Sequence, n: int, mode: str = SAMPLE_UNIFORM, seed: int = 0) -> list:
    """按 frame_indices 从已排序的帧序列中取子集"""
    return [paths[i] for i in frame_indices(len(paths), n, mode, seed)]


def sample_frame_paths(video_dir: str, n: int, mode: str = SAMPLE_UNIFORM, seed: int = 0) -> List[str]:
    """
    返回采样到的帧路径

    异常:
        EmptyDirectoryError: 目录中没有图片
    """
    paths = list_image_files(video_dir)
    if not paths:
        raise EmptyDirectoryError(f"目录中没有图片: {video_dir}")
    return select_frames(paths, n, mode, seed)


def sample_frames(video_dir: str, n: int, mode: str = SAMPLE_UNIFORM, seed: int = 0) -> List[np.ndarray]:
    """
    从视频目录采样 n 帧并读取

    参数:
        video_dir (str): 存放某个视频所有帧的目录，帧按文件名排序
        n (int): 帧数（训练 30，推理 15）
        mode (str): uniform / first / random
        seed (int): random 模式的种子

    返回:
        List[np.ndarray]: RGB 图像列表
    """
    paths = sample_frame_paths(video_dir, n, mode, seed)
    logger.debug(f"{video_dir}: 采样 {len(paths)} 帧")
    return [load_image(p) for p in paths]
