"""
批数据加载
按视频选帧、逐样本独立随机数增强、标准化并拼成批
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from datapipe.augment import AugmentConfig, augment, sample_rng
from datapipe.constants import LABEL_FAKE, LABEL_REAL, SAMPLE_UNIFORM, STREAM_AUGMENT, STREAM_SHUFFLE
from datapipe.dataset import SampleRecord, group_by_video
from datapipe.frames import load_image, select_frames
from datapipe.transforms import DEFAULT_MEAN, DEFAULT_STD, normalize

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    """拼好的一批样本"""

    images: np.ndarray
    labels: np.ndarray
    video_ids: List[str]
    indices: np.ndarray

    def __len__(self):
        return len(self.labels)


def select_training_frames(records: Sequence[SampleRecord], frames_per_video: int,
                           multipliers: Optional[Dict[int, int]] = None,
                           mode: str = SAMPLE_UNIFORM, seed: int = 0) -> List[SampleRecord]:
    """
    每个视频取 frames_per_video × 类别倍数 帧

    参数:
        records: 同一划分的帧记录
        multipliers: 标签 -> 帧数倍数，默认都为 1
    """
    multipliers = multipliers or {LABEL_REAL: 1, LABEL_FAKE: 1}
    chosen = []
    groups = group_by_video(records)
    for video_id in sorted(groups):
        frames = groups[video_id]
        n = frames_per_video * multipliers.get(frames[0].label, 1)
        chosen.extend(select_frames(frames, n, mode, seed))
    return chosen


class FrameLoader:
    """
    训练用加载器
    洗牌顺序由 (seed, epoch, stream) 决定，增强随机数由 (seed, epoch, 样本下标, stream) 决定，
    因此结果与 worker 数无关
    """

    def __init__(self, records: Sequence[SampleRecord], batch_size: int, image_size: int,
                 augment_cfg: Optional[AugmentConfig] = None, seed: int = 0, stream: int = 0,
                 mean=DEFAULT_MEAN, std=DEFAULT_STD, workers: int = 0, cache: bool = True,
                 dtype=np.float32):
        self.records = list(records)
        self.batch_size = batch_size
        self.image_size = image_size
        self.augment_cfg = augment_cfg
        self.seed = seed
        self.stream = stream
        self.mean, self.std = mean, std
        self.workers = workers
        self.dtype = dtype
        self._cache: Optional[Dict[str, np.ndarray]] = {} if cache else None

    def __len__(self):
        return -(-len(self.records) // self.batch_size)

    def _raw(self, path: str) -> np.ndarray:
        if self._cache is None:
            return load_image(path)
        image = self._cache.get(path)
        if image is None:
            image = load_image(path)
            self._cache[path] = image
        return image

    def load(self, index: int, epoch: int) -> np.ndarray:
        image = self._raw(self.records[index].path)
        if self.augment_cfg is not None:
            image = augment(image, self.augment_cfg, sample_rng(self.seed, epoch, index, STREAM_AUGMENT, self.stream))
        return normalize(image, self.image_size, self.mean, self.std, self.dtype)

    def order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, epoch, STREAM_SHUFFLE, self.stream])
        return rng.permutation(len(self.records))

    def epoch(self, epoch: int) -> Iterator[Batch]:
        order = self.order(epoch)
        pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        try:
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                if pool is not None:
                    images = list(pool.map(lambda i: self.load(int(i), epoch), idx))
                else:
                    images = [self.load(int(i), epoch) for i in idx]
                yield Batch(
                    images=np.stack(images),
                    labels=np.array([self.records[i].label for i in idx], dtype=np.int64),
                    video_ids=[self.records[i].video_id for i in idx],
                    indices=idx,
                )
        finally:
            if pool is not None:
                pool.shutdown()


def load_video_frames(records: Sequence[SampleRecord], n: int, image_size: int,
                      mean=DEFAULT_MEAN, std=DEFAULT_STD, mode: str = SAMPLE_UNIFORM,
                      seed: int = 0, dtype=np.float32) -> List[np.ndarray]:
    """推理用：从一个视频的帧记录中取 n 帧并标准化"""
    chosen = select_frames(list(records), n, mode, seed)
    return [normalize(load_image(r.path), image_size, mean, std, dtype) for r in chosen]
