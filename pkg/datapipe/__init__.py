"""
数据管线
数据集扫描与划分、帧采样、增强、标准化和合成数据生成
"""

from datapipe.augment import AugmentConfig, augment, draw_augment_plan
from datapipe.dataset import SampleRecord, read_manifest, scan_dataset, write_manifest
from datapipe.frames import load_image, sample_frames
from datapipe.loader import Batch, FrameLoader
from datapipe.synthetic import gen_synthetic
from datapipe.transforms import denormalize, normalize

__all__ = [
    "AugmentConfig",
    "augment",
    "draw_augment_plan",
    "SampleRecord",
    "read_manifest",
    "scan_dataset",
    "write_manifest",
    "load_image",
    "sample_frames",
    "Batch",
    "FrameLoader",
    "gen_synthetic",
    "denormalize",
    "normalize",
]
