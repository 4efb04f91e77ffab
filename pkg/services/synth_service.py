"""
合成数据服务
生成带伪影的合成人脸数据集并汇总结果
"""

import logging
import traceback
from typing import Any, Dict

from datapipe.constants import DEFAULT_SPLIT_RATIOS
from datapipe.dataset import summarize, read_manifest
from datapipe.synthetic import DEFAULT_SIZE, gen_synthetic
from utils.errors import EXIT_OK, exit_code_for
from utils.file_utils import tree_hash

logger = logging.getLogger(__name__)


class SynthService:
    """合成数据集生成服务类"""

    def generate(self, out_root: str, n_videos: int, frames_per_video: int, seed: int,
                 size: int = DEFAULT_SIZE, split_ratios=DEFAULT_SPLIT_RATIOS,
                 real_multiplier: int = 1) -> Dict[str, Any]:
        """
        生成数据集

        返回:
            Dict: {"success", "error", "exit_code", "real_images", "fake_images", "manifest", "summary", "tree_hash"}
        """
        try:
            logger.info(f"开始生成合成数据: {out_root} videos={n_videos} frames={frames_per_video} seed={seed}")
            result = gen_synthetic(n_videos, frames_per_video, seed, out_root, size=size,
                                   split_ratios=split_ratios, real_multiplier=real_multiplier)
            summary = summarize(read_manifest(result["manifest"]))
            return {
                "success": True,
                "error": "",
                "exit_code": EXIT_OK,
                **result,
                "summary": summary,
                "tree_hash": tree_hash(out_root),
            }
        except Exception as e:
            logger.error(f"生成合成数据失败: {e}")
            logger.debug(traceback.format_exc())
            return {"success": False, "error": str(e), "exit_code": exit_code_for(e)}
