"""
在线数据增强
外层按 rate 决定是否增强，被增强的样本再从 11 种变换中各以 p_each 的概率独立选取
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Tuple

import cv2
import numpy as np

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# 变换名称，按应用顺序排列
RANDOM_ROTATE90 = "random_rotate90"
TRANSPOSE = "transpose"
HORIZONTAL_FLIP = "horizontal_flip"
VERTICAL_FLIP = "vertical_flip"
GAUSS_NOISE = "gauss_noise"
SHIFT_SCALE_ROTATE = "shift_scale_rotate"
CLAHE = "clahe"
SHARPEN = "sharpen"
EMBOSS = "emboss"
BRIGHTNESS_CONTRAST = "brightness_contrast"
HUE_SATURATION_VALUE = "hue_saturation_value"

TRANSFORM_ORDER = (
    RANDOM_ROTATE90,
    TRANSPOSE,
    HORIZONTAL_FLIP,
    VERTICAL_FLIP,
    GAUSS_NOISE,
    SHIFT_SCALE_ROTATE,
    CLAHE,
    SHARPEN,
    EMBOSS,
    BRIGHTNESS_CONTRAST,
    HUE_SATURATION_VALUE,
)


@dataclass
class AugmentConfig:
    """增强参数，区间均为闭区间 (low, high)"""

    rate: float = 0.9
    p_each: float = 0.5
    enabled: Tuple[str, ...] = TRANSFORM_ORDER
    noise_var: Tuple[float, float] = (10.0, 50.0)
    shift_limit: float = 0.0625
    scale_limit: float = 0.1
    rotate_limit: float = 45.0
    clahe_clip: Tuple[float, float] = (1.0, 4.0)
    clahe_grid: int = 8
    sharpen_alpha: Tuple[float, float] = (0.2, 0.5)
    sharpen_lightness: Tuple[float, float] = (0.5, 1.0)
    emboss_alpha: Tuple[float, float] = (0.2, 0.5)
    emboss_strength: Tuple[float, float] = (0.2, 0.7)
    brightness_limit: float = 0.2
    contrast_limit: float = 0.2
    hue_shift: float = 20.0
    sat_shift: float = 30.0
    val_shift: float = 20.0

    def validate(self) -> "AugmentConfig":
        problems = []
        if not 0.0 <= self.rate <= 1.0:
            problems.append(f"rate 必须在 [0,1] 内: {self.rate}")
        if not 0.0 <= self.p_each <= 1.0:
            problems.append(f"p_each 必须在 [0,1] 内: {self.p_each}")
        unknown = sorted(set(self.enabled) - set(TRANSFORM_ORDER))
        if unknown:
            problems.append(f"未知的变换: {unknown}")
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name != "enabled" and isinstance(value, tuple) and value[0] > value[1]:
                problems.append(f"{f.name} 区间下限大于上限: {value}")
        if self.clahe_grid < 1:
            problems.append("clahe_grid 必须为正")
        if problems:
            raise ConfigError("增强配置无效:\n  " + "\n  ".join(problems))
        return self

    def to_dict(self) -> Dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class AugmentPlan:
    """一次抽样的结果：是否增强以及被选中的变换（按应用顺序）"""

    augmented: bool = False
    transforms: List[str] = field(default_factory=list)


def draw_augment_plan(cfg: AugmentConfig, rng: np.random.Generator) -> AugmentPlan:
    """先以 rate 决定是否增强，再对每种变换各抽一次"""
    if rng.random() >= cfg.rate:
        return AugmentPlan()
    chosen = [name for name in TRANSFORM_ORDER if rng.random() < cfg.p_each and name in cfg.enabled]
    return AugmentPlan(True, chosen)


def _blend_filter(image, effect, alpha):
    identity = np.zeros((3, 3), dtype=np.float32)
    identity[1, 1] = 1.0
    kernel = (1.0 - alpha) * identity + alpha * effect
    return cv2.filter2D(image, -1, kernel.astype(np.float32), borderType=cv2.BORDER_REFLECT_101)


def random_rotate90(image, cfg, rng):
    # 非正方形图像只能转 180 度才能保持尺寸
    k = int(rng.integers(1, 4)) if image.shape[0] == image.shape[1] else 2
    return np.ascontiguousarray(np.rot90(image, k))


def transpose(image, cfg, rng):
    if image.shape[0] != image.shape[1]:
        return image
    return np.ascontiguousarray(image.transpose(1, 0, 2))


def horizontal_flip(image, cfg, rng):
    return np.ascontiguousarray(image[:, ::-1])


def vertical_flip(image, cfg, rng):
    return np.ascontiguousarray(image[::-1])


def gauss_noise(image, cfg, rng):
    sigma = np.sqrt(rng.uniform(*cfg.noise_var))
    noise = rng.normal(0.0, sigma, image.shape)
    return np.clip(image.astype(np.float64) + noise, 0, 255).astype(np.uint8)


def shift_scale_rotate(image, cfg, rng):
    h, w = image.shape[:2]
    angle = rng.uniform(-cfg.rotate_limit, cfg.rotate_limit)
    scale = 1.0 + rng.uniform(-cfg.scale_limit, cfg.scale_limit)
    dx = rng.uniform(-cfg.shift_limit, cfg.shift_limit)
    dy = rng.uniform(-cfg.shift_limit, cfg.shift_limit)
    matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, scale)
    matrix[0, 2] += dx * w
    matrix[1, 2] += dy * h
    return cv2.warpAffine(image, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101)


def clahe(image, cfg, rng):
    clip = rng.uniform(*cfg.clahe_clip)
    lab = cv2.cvtColor(image, cv2.COLOR_RGB2LAB)
    op = cv2.createCLAHE(clipLimit=float(clip), tileGridSize=(cfg.clahe_grid, cfg.clahe_grid))
    lab[:, :, 0] = op.apply(np.ascontiguousarray(lab[:, :, 0]))
    return cv2.cvtColor(lab, cv2.COLOR_LAB2RGB)


def sharpen(image, cfg, rng):
    alpha = rng.uniform(*cfg.sharpen_alpha)
    lightness = rng.uniform(*cfg.sharpen_lightness)
    effect = np.array([[-1, -1, -1], [-1, 8 + lightness, -1], [-1, -1, -1]], dtype=np.float32)
    return _blend_filter(image, effect, alpha)


def emboss(image, cfg, rng):
    alpha = rng.uniform(*cfg.emboss_alpha)
    s = rng.uniform(*cfg.emboss_strength)
    effect = np.array([[-1 - s, -s, 0], [-s, 1, s], [0, s, 1 + s]], dtype=np.float32)
    return _blend_filter(image, effect, alpha)


def brightness_contrast(image, cfg, rng):
    alpha = 1.0 + rng.uniform(-cfg.contrast_limit, cfg.contrast_limit)
    beta = rng.uniform(-cfg.brightness_limit, cfg.brightness_limit) * 255.0
    return np.clip(image.astype(np.float64) * alpha + beta, 0, 255).astype(np.uint8)


def hue_saturation_value(image, cfg, rng):
    dh = rng.uniform(-cfg.hue_shift, cfg.hue_shift)
    ds = rng.uniform(-cfg.sat_shift, cfg.sat_shift)
    dv = rng.uniform(-cfg.val_shift, cfg.val_shift)
    hsv = cv2.cvtColor(image, cv2.COLOR_RGB2HSV)
    # OpenCV 的 8 位色相范围是 [0, 180)
    lut_h = np.mod(np.arange(256) + int(round(dh)), 180).astype(np.uint8)
    lut_s = np.clip(np.arange(256) + ds, 0, 255).astype(np.uint8)
    lut_v = np.clip(np.arange(256) + dv, 0, 255).astype(np.uint8)
    h, s, v = cv2.split(hsv)
    hsv = cv2.merge((cv2.LUT(h, lut_h), cv2.LUT(s, lut_s), cv2.LUT(v, lut_v)))
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)


TRANSFORMS: Dict[str, Callable] = {
    RANDOM_ROTATE90: random_rotate90,
    TRANSPOSE: transpose,
    HORIZONTAL_FLIP: horizontal_flip,
    VERTICAL_FLIP: vertical_flip,
    GAUSS_NOISE: gauss_noise,
    SHIFT_SCALE_ROTATE: shift_scale_rotate,
    CLAHE: clahe,
    SHARPEN: sharpen,
    EMBOSS: emboss,
    BRIGHTNESS_CONTRAST: brightness_contrast,
    HUE_SATURATION_VALUE: hue_saturation_value,
}


def apply_plan(image: np.ndarray, plan: AugmentPlan, cfg: AugmentConfig,
               rng: np.random.Generator) -> np.ndarray:
    for name in plan.transforms:
        image = TRANSFORMS[name](image, cfg, rng)
    return image


def augment(image: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """
    对单张 uint8 RGB 图像做随机增强

    参数:
        image (np.ndarray): H×W×3 uint8
        cfg (AugmentConfig): 增强配置
        rng (np.random.Generator): 该样本独立的随机数生成器

    返回:
        np.ndarray: 同尺寸的 uint8 图像；未被选中增强时返回原数组
    """
    plan = draw_augment_plan(cfg, rng)
    if not plan.augmented:
        return image
    return apply_plan(image, plan, cfg, rng)


def sample_rng(seed: int, epoch: int, index: int, stream: int, *extra: int) -> np.random.Generator:
    """每个样本独立的随机数生成器，结果与加载顺序和并行度无关"""
    return np.random.default_rng([seed, epoch, index, stream, *extra])
