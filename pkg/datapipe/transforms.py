"""
图像标准化
缩放到模型输入尺寸、归一化到 [0,1] 再按通道标准化，以及逆变换
"""

import logging
from typing import Sequence

import cv2
import numpy as np

from utils.errors import NonRGBImageError

logger = logging.getLogger(__name__)

DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.5, 0.5, 0.5)


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """缩小用 INTER_AREA，放大用 INTER_LINEAR；尺寸已满足时原样返回"""
    h, w = image.shape[:2]
    if (h, w) == (size, size):
        return image
    interpolation = cv2.INTER_AREA if size < min(h, w) else cv2.INTER_LINEAR
    return cv2.resize(image, (size, size), interpolation=interpolation)


def normalize(image: np.ndarray, size: int = 224, mean: Sequence[float] = DEFAULT_MEAN,
              std: Sequence[float] = DEFAULT_STD, dtype=np.float32) -> np.ndarray:
    """
    预处理单帧

    参数:
        image (np.ndarray): H×W×3 的 uint8 RGB 图像
        size (int): 输出边长
        mean, std: 每通道均值与标准差

    返回:
        np.ndarray: 3×size×size，(x/255 - mean) / std

    异常:
        NonRGBImageError: 输入不是三通道图像
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise NonRGBImageError(f"需要 H×W×3 的 RGB 图像，实际形状 {image.shape}")
    image = resize_image(image, size)
    x = image.astype(dtype) / np.asarray(255.0, dtype=dtype)
    mean = np.asarray(mean, dtype=dtype).reshape(1, 1, 3)
    std = np.asarray(std, dtype=dtype).reshape(1, 1, 3)
    x = (x - mean) / std
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def denormalize(x: np.ndarray, mean: Sequence[float] = DEFAULT_MEAN,
                std: Sequence[float] = DEFAULT_STD) -> np.ndarray:
    """normalize 的逆变换，返回 3×H×W、取值 [0,1] 的数组"""
    c = x.shape[-3]
    mean = np.asarray(mean, dtype=x.dtype).reshape(c, 1, 1)
    std = np.asarray(std, dtype=x.dtype).reshape(c, 1, 1)
    return x * std + mean


def to_uint8(x: np.ndarray) -> np.ndarray:
    """3×H×W 的 [0,1] 数组转为 H×W×3 的 uint8 图像"""
    return np.clip(np.rint(x.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
