"""
训练服务
网络 A、B 在同一命令中训练，但各自使用独立的优化器、损失和批数据流

职责:
1. 数据准备：读取清单（没有清单时扫描目录），按视频选帧并建立两个加载器
2. 逐轮训练：每轮先训练网络 A 再训练网络 B，任何非有限损失立即中止
3. 验证：在验证集上逐视频调用 predict_video 计算视频级准确率
4. 持久化：每轮写出指标 CSV 和检查点，支持从检查点续训
"""

import logging
import math
import os
import traceback
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import RunConfig
from datapipe.augment import AugmentConfig
from datapipe.constants import (
    LABEL_FAKE,
    LABEL_REAL,
    SPLIT_TRAIN,
    SPLIT_VALID,
    STREAM_REPARAM,
)
from datapipe.dataset import SampleRecord, filter_split, group_by_video, load_records
from datapipe.loader import FrameLoader, load_video_frames, select_training_frames
from models.genconvit import GenConViT, loss_a, loss_b_terms, predict_video
from services.checkpoint_service import load_checkpoint, restore_model, restore_optimizers, save_checkpoint
from services.model_factory import ModelFactory
from tensorcore.optim import Adam
from tensorcore.tensor import Tensor, backward
from utils.csv_utils import write_csv
from utils.errors import EXIT_OK, DatasetError, NonFiniteLossError, exit_code_for

logger = logging.getLogger(__name__)

METRICS_FILE = "train_metrics.csv"
METRICS_COLUMNS = ["epoch", "loss_a", "loss_b", "val_acc", "mse_b"]
METRICS_TAG = "genconvit-metrics v1"
LAST_CHECKPOINT = "last.ckpt"
STREAM_A = 0
STREAM_B = 1


def metrics_header(run: RunConfig) -> str:
    t = run.train
    return (f"# {METRICS_TAG} lr={t.lr!r} weight_decay={t.weight_decay!r} "
            f"batch_a={t.batch_a} batch_b={t.batch_b} seed={run.seed}")


def _check_finite(value: float, net: str, epoch: int, batch: int) -> None:
    if not math.isfinite(value):
        raise NonFiniteLossError(f"网络 {net.upper()} 第 {epoch + 1} 轮第 {batch} 批损失非有限: {value}")


class TrainService:
    """训练服务类"""

    def __init__(self, run: RunConfig, progress: bool = True):
        """
        初始化训练服务

        参数:
            run (RunConfig): 运行配置
            progress (bool): 是否显示进度条
        """
        self.run_config = run
        self.progress = progress
        self.history: List[Dict[str, float]] = []

    # 数据
    def build_loaders(self, records: List[SampleRecord]) -> Tuple[FrameLoader, FrameLoader]:
        run = self.run_config
        t = run.train
        chosen = select_training_frames(
            filter_split(records, SPLIT_TRAIN), run.data.frames_train,
            {LABEL_REAL: t.real_multiplier, LABEL_FAKE: t.fake_multiplier},
            run.data.sample_mode, run.seed,
        )
        if not chosen:
            raise DatasetError("训练集为空")
        aug = AugmentConfig(rate=t.aug_rate, p_each=t.aug_p_each).validate()
        common = dict(image_size=run.model.image_size, augment_cfg=aug, seed=run.seed,
                      mean=run.model.norm_mean, std=run.model.norm_std, workers=t.workers)
        loader_a = FrameLoader(chosen, t.batch_a, stream=STREAM_A, **common)
        loader_b = FrameLoader(chosen, t.batch_b, stream=STREAM_B, **common)
        logger.info(f"训练样本 {len(chosen)} 帧: A {len(loader_a)} 批, B {len(loader_b)} 批")
        return loader_a, loader_b

    # 单轮训练
    def train_epoch_a(self, model: GenConViT, opt: Adam, loader: FrameLoader, epoch: int) -> float:
        model.net_a.train()
        total, count = [], 0
        batches = tqdm(loader.epoch(epoch), total=len(loader), desc=f"A {epoch + 1}", disable=not self.progress)
        for i, batch in enumerate(batches):
            loss = loss_a(model.net_a(Tensor(batch.images)), batch.labels)
            value = float(loss.item())
            _check_finite(value, "a", epoch, i)
            opt.step(backward(loss, params=opt.params.values()))
            model.net_a.zero_grad()
            total.append(value * len(batch))
            count += len(batch)
        return math.fsum(total) / count

    def train_epoch_b(self, model: GenConViT, opt: Adam, loader: FrameLoader, epoch: int) -> Tuple[float, float]:
        cfg = self.run_config.model
        model.net_b.train()
        losses, mses, count = [], [], 0
        batches = tqdm(loader.epoch(epoch), total=len(loader), desc=f"B {epoch + 1}", disable=not self.progress)
        for i, batch in enumerate(batches):
            image = Tensor(batch.images)
            rng = np.random.default_rng([self.run_config.seed, epoch, i, STREAM_REPARAM])
            out = model.net_b(image, rng=rng)
            terms = loss_b_terms(out.logits, batch.labels, out.recon, image, out.mu, out.logvar,
                                 mse_weight=cfg.mse_weight, kl_weight=cfg.kl_weight,
                                 norm_mean=cfg.norm_mean, norm_std=cfg.norm_std)
            value = float(terms.total.item())
            _check_finite(value, "b", epoch, i)
            mse = float(terms.mse.item())
            opt.step(backward(terms.total, params=opt.params.values()))
            model.net_b.zero_grad()
            losses.append(value * len(batch))
            mses.append(mse * len(batch))
            count += len(batch)
        return math.fsum(losses) / count, math.fsum(mses) / count

    def validate(self, model: GenConViT, records: List[SampleRecord]) -> float:
        """验证集视频级准确率；没有验证集时为 NaN"""
        run = self.run_config
        groups = group_by_video(filter_split(records, SPLIT_VALID))
        if not groups:
            return float("nan")
        correct = 0
        for video_id in sorted(groups):
            frames = load_video_frames(groups[video_id], run.data.frames_eval, run.model.image_size,
                                       run.model.norm_mean, run.model.norm_std, run.data.sample_mode, run.seed)
            result = predict_video(frames, model)
            correct += int((result.verdict == "FAKE") == (groups[video_id][0].label == LABEL_FAKE))
        return correct / len(groups)

    # 持久化
    def write_metrics(self) -> str:
        path = os.path.join(self.run_config.io.metrics_dir, METRICS_FILE)
        df = pd.DataFrame(self.history, columns=METRICS_COLUMNS)
        df["epoch"] = df["epoch"].astype(int)
        return write_csv(df, path, header_line=metrics_header(self.run_config))

    def save(self, model: GenConViT, optimizers: Dict[str, Adam], epoch: int) -> str:
        path = os.path.join(self.run_config.io.checkpoint_dir, LAST_CHECKPOINT)
        meta = {"seed": self.run_config.seed, "history": self.history}
        return save_checkpoint(model, path, optimizers, self.run_config.to_dict(), epoch, meta)

    def run(self, resume: Optional[str] = None, epochs: Optional[int] = None) -> Dict[str, Any]:
        """
        执行训练

        参数:
            resume (str): 检查点路径，给出时从其记录的轮数继续
            epochs (int): 覆盖配置中的总轮数

        返回:
            Dict: {"success", "error", "exit_code", "metrics_csv", "checkpoint", "history", "epochs_run"}
        """
        run = self.run_config
        total_epochs = epochs if epochs is not None else run.train.epochs
        try:
            records = load_records(run.data.root, run.data.split, run.seed)
            loader_a, loader_b = self.build_loaders(records)

            model = ModelFactory.create_model(run.model, run.seed)
            optimizers = ModelFactory.create_optimizers(model, run.train.lr, run.train.weight_decay)
            start = 0
            if resume:
                checkpoint = load_checkpoint(resume)
                restore_model(checkpoint, model)
                restore_optimizers(checkpoint, optimizers)
                start = checkpoint.epoch
                self.history = [dict(row) for row in checkpoint.meta.get("history", [])][:start]
                logger.info(f"从检查点续训: {resume}, 已完成 {start} 轮")

            checkpoint_path = None
            for epoch in range(start, total_epochs):
                la = self.train_epoch_a(model, optimizers["a"], loader_a, epoch)
                lb, mse_b = self.train_epoch_b(model, optimizers["b"], loader_b, epoch)
                val_acc = self.validate(model, records)
                self.history.append({"epoch": epoch + 1, "loss_a": la, "loss_b": lb,
                                     "val_acc": val_acc, "mse_b": mse_b})
                logger.info(f"第 {epoch + 1}/{total_epochs} 轮: loss_a={la:.6f} loss_b={lb:.6f} "
                            f"val_acc={val_acc:.4f} mse_b={mse_b:.6f}")
                self.write_metrics()
                checkpoint_path = self.save(model, optimizers, epoch + 1)

            return {
                "success": True,
                "error": "",
                "exit_code": EXIT_OK,
                "metrics_csv": os.path.join(run.io.metrics_dir, METRICS_FILE),
                "checkpoint": checkpoint_path,
                "history": list(self.history),
                "epochs_run": max(total_epochs - start, 0),
                "model": model,
            }
        except Exception as e:
            logger.error(f"训练失败: {e}")
            logger.debug(traceback.format_exc())
            return {"success": False, "error": str(e), "exit_code": exit_code_for(e)}
