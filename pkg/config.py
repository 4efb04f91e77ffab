"""
配置文件
包含应用程序的全局配置，以及一次运行的完整配置（模型/训练/数据/输出）
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv  # 导入dotenv库

from datapipe.constants import SAMPLE_MODES, SPLITS
from models.config import PRESETS, ModelConfig, preset_config
from utils.errors import ConfigError

# 加载.env文件中的环境变量
load_dotenv()

# 基础路径配置
BASE_DIR = Path(__file__).resolve().parent
DATA_DIR = os.environ.get("GENCONVIT_DATA_DIR", os.path.join(BASE_DIR, "data"))
CHECKPOINT_DIR = os.environ.get("GENCONVIT_CHECKPOINT_DIR", os.path.join(BASE_DIR, "checkpoints"))
METRICS_DIR = os.environ.get("GENCONVIT_METRICS_DIR", os.path.join(BASE_DIR, "metrics_out"))

# 运行默认值
DEFAULT_PRESET = os.environ.get("GENCONVIT_PRESET", "toy")
DEFAULT_SEED = int(os.environ.get("GENCONVIT_SEED", "0"))
DEFAULT_THREADS = int(os.environ.get("GENCONVIT_THREADS", "1"))

# 日志配置
LOG_LEVEL = os.environ.get("GENCONVIT_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"



@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_a: int = 32
    batch_b: int = 16
    epochs: int = 30
    aug_rate: float = 0.9
    aug_p_each: float = 0.5
    real_multiplier: int = 1
    fake_multiplier: int = 1
    workers: int = 0


@dataclass
class DataConfig:
    root: str = DATA_DIR
    frames_train: int = 30
    frames_eval: int = 15
    split: Tuple[float, float, float] = (0.8, 0.15, 0.05)
    sample_mode: str = "uniform"
    eval_split: str = "test"


@dataclass
class IOConfig:
    checkpoint_dir: str = CHECKPOINT_DIR
    metrics_dir: str = METRICS_DIR


@dataclass
class RunConfig:
    """一次运行的全部配置"""

    model: ModelConfig = field(default_factory=lambda: preset_config(DEFAULT_PRESET))
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    io: IOConfig = field(default_factory=IOConfig)
    seed: int = DEFAULT_SEED
    threads: int = DEFAULT_THREADS

    def validate(self) -> "RunConfig":
        problems = []
        t = self.train
        if t.lr <= 0:
            problems.append(f"train.lr 必须为正: {t.lr}")
        if t.weight_decay < 0:
            problems.append(f"train.weight_decay 不能为负: {t.weight_decay}")
        for name in ("batch_a", "batch_b", "epochs", "real_multiplier", "fake_multiplier"):
            if getattr(t, name) < 1:
                problems.append(f"train.{name} 必须为正: {getattr(t, name)}")
        if not (0.0 <= t.aug_rate <= 1.0 and 0.0 <= t.aug_p_each <= 1.0):
            problems.append("train.aug_rate / aug_p_each 必须在 [0,1] 内")
        if self.data.frames_train < 1 or self.data.frames_eval < 1:
            problems.append("data.frames_train / frames_eval 必须为正")
        if len(self.data.split) != 3 or abs(sum(self.data.split) - 1.0) > 1e-9 or min(self.data.split) < 0:
            problems.append(f"data.split 必须是三个和为 1 的非负数: {self.data.split}")
        if self.data.sample_mode not in SAMPLE_MODES:
            problems.append(f"data.sample_mode 必须是 {SAMPLE_MODES} 之一: {self.data.sample_mode}")
        if self.data.eval_split not in SPLITS:
            problems.append(f"data.eval_split 必须是 {SPLITS} 之一: {self.data.eval_split}")
        if self.seed < 0 or self.threads < 1:
            problems.append("seed 不能为负且 threads 至少为 1")
        if problems:
            raise ConfigError("运行配置无效:\n  " + "\n  ".join(problems))
        self.model.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["model"] = self.model.to_dict()
        data["data"]["split"] = list(self.data.split)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        从嵌套字典构造；缺省项取默认值，model 段先按 preset 取预设再覆盖

        异常:
            ConfigError: 出现未知配置项
        """
        data = dict(data)
        _check_keys(cls, data, "顶层")
        run = cls()
        if "model" in data:
            run.model = _merge_model(data["model"])
        for section, section_cls in (("train", TrainConfig), ("data", DataConfig), ("io", IOConfig)):
            values = dict(data.get(section) or {})
            _check_keys(section_cls, values, section)
            if "split" in values:
                values["split"] = tuple(values["split"])
            setattr(run, section, section_cls(**{**asdict(section_cls()), **values}))
        if "seed" in data:
            run.seed = int(data["seed"])
        if "threads" in data:
            run.threads = int(data["threads"])
        return run


def _check_keys(cls, data: Dict[str, Any], section: str) -> None:
    unknown = sorted(set(data) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"{section} 中有未知配置项: {', '.join(unknown)}")


def _merge_model(data: Dict[str, Any]) -> ModelConfig:
    preset = data.get("preset", DEFAULT_PRESET)
    if preset not in PRESETS:
        raise ConfigError(f"未知的预设: {preset}，可选 {PRESETS}")
    base = preset_config(preset).to_dict()
    backbone = {**base.pop("backbone"), **(data.get("backbone") or {})}
    merged = {**base, **{k: v for k, v in data.items() if k != "backbone"}, "backbone": backbone}
    return ModelConfig.from_dict(merged)


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    读取运行配置：命令行覆盖 > 配置文件 > 默认值

    参数:
        path (str): JSON 配置文件路径，可选
        overrides (dict): 命令行给出的值，键为 "train.lr" 这样的点分路径，值为 None 的项忽略

    返回:
        RunConfig: 校验后的配置
    """
    data: Dict[str, Any] = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"配置文件不存在: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"配置文件不是合法的 JSON: {path}: {e}") from e

    overrides = overrides or {}
    preset = overrides.get("model.preset")
    if preset is not None and (data.get("model") or {}).get("preset", preset) != preset:
        # 换预设时文件中的尺寸参数不再适用
        data["model"] = {}

    for dotted, value in overrides.items():
        if value is None:
            continue
        keys = dotted.split(".")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value

    return RunConfig.from_dict(data).validate()


def save_run_config(run: RunConfig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(run.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path
