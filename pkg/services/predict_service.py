"""
预测服务
对一个视频的帧目录做视频级判定
"""

import logging
import os
import traceback
from typing import Any, Dict

from datapipe.constants import FRAMES_EVAL, SAMPLE_UNIFORM
from datapipe.frames import sample_frames
from datapipe.transforms import normalize
from models.genconvit import GenConViT, predict_video
from utils.errors import EXIT_OK, exit_code_for

logger = logging.getLogger(__name__)


def format_prediction(video_id: str, score: float, verdict: str, frames_used: int) -> str:
    """输出行：video_id  score  verdict  frames_used（制表符分隔）"""
    return f"{video_id}\t{score:.6f}\t{verdict}\t{frames_used}"


class PredictService:
    """视频预测服务类"""

    def __init__(self, model: GenConViT):
        self.model = model

    def predict_directory(self, video_dir: str, n_frames: int = FRAMES_EVAL, net: str = "both",
                          mode: str = SAMPLE_UNIFORM, seed: int = 0) -> Dict[str, Any]:
        """
        预测一个帧目录

        参数:
            video_dir (str): 某个视频的帧目录
            n_frames (int): 最多使用的帧数
            net (str): a / b / both

        返回:
            Dict: {"success", "error", "exit_code", "video_id", "score", "verdict", "frames_used", "line"}
        """
        try:
            if not os.path.isdir(video_dir):
                raise NotADirectoryError(f"不是目录: {video_dir}")
            cfg = self.model.config
            images = sample_frames(video_dir, n_frames, mode, seed)
            frames = [normalize(img, cfg.image_size, cfg.norm_mean, cfg.norm_std) for img in images]
            result = predict_video(frames, self.model, net=net)
            video_id = os.path.basename(os.path.normpath(video_dir))
            line = format_prediction(video_id, result.video_score, result.verdict, result.frames_used)
            logger.info(f"预测完成: {line}")
            return {
                "success": True,
                "error": "",
                "exit_code": EXIT_OK,
                "video_id": video_id,
                "score": result.video_score,
                "verdict": result.verdict,
                "frames_used": result.frames_used,
                "score_a": result.score_a,
                "score_b": result.score_b,
                "line": line,
            }
        except Exception as e:
            logger.error(f"预测失败: {e}")
            logger.debug(traceback.format_exc())
            return {"success": False, "error": str(e), "exit_code": exit_code_for(e)}
