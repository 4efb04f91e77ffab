"""
合成人脸数据集
REAL 帧是程序化渲染的明暗椭圆人脸；FAKE 帧在同一帧的中心区域加入扭曲、模糊、偏色并羽化融合
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict

import cv2
import numpy as np

from datapipe.constants import CLASS_DIRS, DEFAULT_SPLIT_RATIOS, MANIFEST_NAME
from datapipe.dataset import scan_dataset, write_manifest
from datapipe.frames import save_image
from utils.errors import ConfigError, SynthesisError
from utils.file_utils import ensure_dir, is_writable_target

logger = logging.getLogger(__name__)

DEFAULT_SIZE = 64


@dataclass
class FaceParams:
    """一个视频共享的外观参数"""

    cx: float
    cy: float
    a: float
    b: float
    tilt: float
    light: np.ndarray
    skin: np.ndarray
    eye: np.ndarray
    mouth: np.ndarray
    bg_top: np.ndarray
    bg_bottom: np.ndarray
    texture: np.ndarray


@dataclass
class ArtifactParams:
    """一个伪造视频共享的伪影参数"""

    amplitude: float
    period: float
    phase: float
    blur_sigma: float
    color_shift: np.ndarray
    radius: float


def draw_face_params(rng: np.random.Generator, size: int) -> FaceParams:
    light = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.2), 1.0])
    return FaceParams(
        cx=0.5 + rng.uniform(-0.05, 0.05),
        cy=0.5 + rng.uniform(-0.05, 0.05),
        a=rng.uniform(0.26, 0.32),
        b=rng.uniform(0.34, 0.40),
        tilt=math.radians(rng.uniform(-15.0, 15.0)),
        light=light / np.linalg.norm(light),
        skin=rng.uniform([150, 100, 80], [245, 200, 170]),
        eye=rng.uniform([20, 20, 20], [80, 70, 60]),
        mouth=rng.uniform([120, 30, 40], [190, 80, 90]),
        bg_top=rng.uniform(20, 235, 3),
        bg_bottom=rng.uniform(20, 235, 3),
        texture=rng.normal(0.0, 3.0, (size, size, 1)),
    )


def draw_artifact_params(rng: np.random.Generator, size: int) -> ArtifactParams:
    shift = rng.uniform(8.0, 14.0, 3) * rng.choice([-1.0, 1.0], 3)
    return ArtifactParams(
        amplitude=rng.uniform(1.0, 2.0) * size / 64.0,
        period=rng.uniform(0.25, 0.45) * size,
        phase=rng.uniform(0.0, 2 * math.pi),
        blur_sigma=rng.uniform(1.0, 1.6) * size / 64.0,
        color_shift=shift,
        radius=rng.uniform(0.14, 0.18) * size,
    )


def render_face(params: FaceParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    渲染一帧：在 params 的基础上加入逐帧的微小抖动和传感器噪声

    返回:
        np.ndarray: size×size×3 uint8
    """
    cx = params.cx + rng.uniform(-0.015, 0.015)
    cy = params.cy + rng.uniform(-0.015, 0.015)
    tilt = params.tilt + math.radians(rng.uniform(-2.0, 2.0))

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx = (xx + 0.5) / size - cx
    dy = (yy + 0.5) / size - cy
    cos_t, sin_t = math.cos(tilt), math.sin(tilt)
    u = (dx * cos_t + dy * sin_t) / params.a
    v = (-dx * sin_t + dy * cos_t) / params.b
    r2 = u * u + v * v

    # 椭球面法向量与朗伯光照
    nz = np.sqrt(np.clip(1.0 - r2, 0.0, 1.0))
    lx, ly, lz = params.light
    shade = 0.35 + 0.65 * np.clip(u * lx + v * ly + nz * lz, 0.0, 1.0)
    face = params.skin[None, None, :] * shade[..., None]

    for ex in (-0.38, 0.38):
        d = ((u - ex) / 0.14) ** 2 + ((v + 0.22) / 0.08) ** 2
        alpha = np.clip((1.0 - d) / 0.3, 0.0, 1.0)[..., None]
        face = face * (1.0 - alpha) + params.eye * alpha
    d = (u / 0.32) ** 2 + ((v - 0.45) / 0.07) ** 2
    alpha = np.clip((1.0 - d) / 0.3, 0.0, 1.0)[..., None]
    face = face * (1.0 - alpha) + params.mouth * alpha

    t = ((yy + 0.5) / size)[..., None]
    background = params.bg_top * (1.0 - t) + params.bg_bottom * t
    inside = np.clip((1.0 - r2) / 0.05, 0.0, 1.0)[..., None]
    image = background * (1.0 - inside) + face * inside
    image = image + params.texture + rng.normal(0.0, 1.5, image.shape)
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def apply_artifact(image: np.ndarray, art: ArtifactParams, center=None) -> np.ndarray:
    """
    在中心区域制造换脸痕迹：正弦扭曲 + 高斯模糊 + 偏色，用高斯羽化掩码融合

    参数:
        image (np.ndarray): size×size×3 uint8
        art (ArtifactParams): 伪影参数
        center: 伪影中心 (x, y)，默认图像中心

    返回:
        np.ndarray: 同尺寸 uint8
    """
    h, w = image.shape[:2]
    cx, cy = center if center is not None else (w / 2.0, h / 2.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    map_x = xx + art.amplitude * np.sin(2 * np.pi * yy / art.period + art.phase).astype(np.float32)
    map_y = yy + art.amplitude * np.cos(2 * np.pi * xx / art.period + art.phase).astype(np.float32)
    warped = cv2.remap(image, map_x, map_y, cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101)
    blurred = cv2.GaussianBlur(warped, (0, 0), art.blur_sigma).astype(np.float64)
    shifted = blurred + art.color_shift[None, None, :]

    mask = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * art.radius ** 2)).astype(np.float64)[..., None]
    out = mask * shifted + (1.0 - mask) * image.astype(np.float64)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def gen_synthetic(n_videos: int, frames_per_video: int, seed: int, out_root: str,
                  size: int = DEFAULT_SIZE, split_ratios=DEFAULT_SPLIT_RATIOS,
                  real_multiplier: int = 1) -> Dict:
    """
    生成合成数据集：out_root/{real,fake}/vid_XXXX/frame_YYY.png 以及 manifest.tsv

    参数:
        n_videos (int): 每个类别的视频数（至少 2）
        frames_per_video (int): 每个视频的帧数
        seed (int): 随机种子，相同种子生成逐字节相同的数据集
        out_root (str): 输出目录
        size (int): 图片边长
        real_multiplier (int): 真实视频的帧数倍数，用于模拟类别间帧数不平衡

    返回:
        Dict: {"real_images", "fake_images", "videos", "manifest", "records"}

    异常:
        ConfigError: 参数无效
        SynthesisError: 输出目录不可写
    """
    if n_videos < 2:
        raise ConfigError(f"视频数至少为 2，实际 {n_videos}")
    if frames_per_video < 1 or size < 16 or real_multiplier < 1:
        raise ConfigError("frames_per_video/real_multiplier 必须为正且 size >= 16")
    if not is_writable_target(out_root):
        raise SynthesisError(f"输出目录不可写: {out_root}")

    counts = {"real": 0, "fake": 0}
    try:
        for v in range(n_videos):
            name = f"vid_{v:04d}"
            face = draw_face_params(np.random.default_rng([seed, v, 0]), size)
            art = draw_artifact_params(np.random.default_rng([seed, v, 1]), size)
            real_dir = os.path.join(out_root, "real", name)
            fake_dir = os.path.join(out_root, "fake", name)
            ensure_dir(real_dir)
            ensure_dir(fake_dir)

            n_real = frames_per_video * real_multiplier
            for f in range(n_real):
                frame = render_face(face, size, np.random.default_rng([seed, v, 2, f]))
                save_image(frame, os.path.join(real_dir, f"frame_{f:03d}.png"))
                counts["real"] += 1
                if f < frames_per_video:
                    center = (face.cx * size, face.cy * size)
                    save_image(apply_artifact(frame, art, center), os.path.join(fake_dir, f"frame_{f:03d}.png"))
                    counts["fake"] += 1
    except OSError as e:
        raise SynthesisError(f"写入合成数据失败: {e}") from e

    records = scan_dataset(out_root, split_ratios, seed)
    manifest = write_manifest(records, os.path.join(out_root, MANIFEST_NAME))
    logger.info(f"合成数据集完成: {out_root} real={counts['real']} fake={counts['fake']}")
    return {
        "real_images": counts["real"],
        "fake_images": counts["fake"],
        "videos": n_videos * len(CLASS_DIRS),
        "manifest": manifest,
        "records": len(records),
    }
