"""
检查点服务
自定义二进制格式：魔数 + 版本 + JSON 头 + 小端字节序张量数据

文件布局:
    b"GCVTCKPT"           8 字节魔数
    u32 (LE)              格式版本
    u64 (LE)              头部长度 H
    H 字节                 JSON 头（键排序、紧凑分隔符）
    其余                   张量数据，按头部 tensors 列表的顺序首尾相接

头部字段:
    version, epoch, config（运行配置）, meta（优化器步数、已有的指标记录等）,
    tensors: [{"name", "dtype", "shape", "offset", "nbytes"}]，按名称排序
"""

import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

import numpy as np

from models.config import ModelConfig
from models.genconvit import GenConViT
from tensorcore.optim import Adam
from utils.errors import (
    CheckpointError,
    CheckpointVersionError,
    TruncatedCheckpointError,
)

logger = logging.getLogger(__name__)

MAGIC = b"GCVTCKPT"
FORMAT_VERSION = 1
OPTIM_PREFIX = "optim"
_PREAMBLE = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    """检查点的内存表示"""

    tensors: "OrderedDict[str, np.ndarray]"
    config: Dict[str, Any] = field(default_factory=dict)
    epoch: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    def model_state(self) -> Dict[str, np.ndarray]:
        """模型参数与缓冲区（不含优化器状态）"""
        return {k: v for k, v in self.tensors.items() if not k.startswith(OPTIM_PREFIX + "/")}

    def optimizer_arrays(self, net: str) -> Dict[str, np.ndarray]:
        prefix = f"{OPTIM_PREFIX}/{net}/"
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def model_config(self) -> ModelConfig:
        if "model" not in self.config:
            raise CheckpointError("检查点中没有模型配置")
        return ModelConfig.from_dict(self.config["model"])


def _little_endian(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


def write_checkpoint(checkpoint: Checkpoint, path: str) -> str:
    """
    按格式写出检查点；先写临时文件再替换，避免留下半个文件

    返回:
        str: 写出的路径
    """
    entries, chunks, offset = [], [], 0
    for name in sorted(checkpoint.tensors):
        array = np.asarray(checkpoint.tensors[name])
        dtype = _little_endian(array.dtype)
        raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
        entries.append({"name": name, "dtype": dtype.str, "shape": list(array.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    header = {
        "version": FORMAT_VERSION,
        "epoch": int(checkpoint.epoch),
        "config": checkpoint.config,
        "meta": checkpoint.meta,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp, path)
    logger.info(f"检查点已保存: {path} ({len(entries)} 个张量, epoch={checkpoint.epoch})")
    return path


def read_checkpoint(path: str) -> Checkpoint:
    """
    读取检查点

    异常:
        FileNotFoundError: 文件不存在
        CheckpointVersionError: 魔数或版本不匹配
        TruncatedCheckpointError: 文件长度不足
        CheckpointError: 头部无法解析
    """
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < len(MAGIC) or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointVersionError(f"不是检查点文件（魔数不匹配）: {path}")
    if len(raw) < _PREAMBLE.size:
        raise TruncatedCheckpointError(f"检查点文件头不完整: {path}")
    _, version, header_len = _PREAMBLE.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"不支持的检查点版本 {version}，当前版本 {FORMAT_VERSION}")
    start = _PREAMBLE.size + header_len
    if len(raw) < start:
        raise TruncatedCheckpointError(f"检查点头部被截断: {path}")

    try:
        header = json.loads(raw[_PREAMBLE.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点头部无法解析: {e}") from e

    blob = memoryview(raw)[start:]
    tensors = OrderedDict()
    for entry in header.get("tensors", []):
        end = entry["offset"] + entry["nbytes"]
        if end > len(blob):
            raise TruncatedCheckpointError(f"张量 {entry['name']} 的数据被截断: 需要 {end} 字节，实际 {len(blob)}")
        dtype = np.dtype(entry["dtype"])
        array = np.frombuffer(blob[entry["offset"]:end], dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = array.astype(dtype.newbyteorder("="), copy=True)

    return Checkpoint(tensors=tensors, config=header.get("config", {}),
                      epoch=header.get("epoch", 0), meta=header.get("meta", {}))


def save_checkpoint(model: GenConViT, path: str, optimizers: Optional[Mapping[str, Adam]] = None,
                    config: Optional[Dict[str, Any]] = None, epoch: int = 0,
                    meta: Optional[Dict[str, Any]] = None) -> str:
    """
    保存模型参数、BN 统计量和可选的优化器状态

    参数:
        model (GenConViT): 模型
        path (str): 输出路径
        optimizers: {"a": Adam, "b": Adam}，可选
        config (dict): 运行配置快照，缺省时只记录模型配置
        epoch (int): 已完成的轮数
        meta (dict): 其他可 JSON 序列化的状态

    返回:
        str: 输出路径
    """
    tensors = OrderedDict(model.state_dict())
    meta = dict(meta or {})
    steps = {}
    for net, opt in (optimizers or {}).items():
        tensors.update(opt.state_arrays(f"{OPTIM_PREFIX}/{net}"))
        steps[net] = opt.state.step
    if steps:
        meta["optimizer_steps"] = steps
    config = dict(config) if config else {"model": model.config.to_dict()}
    return write_checkpoint(Checkpoint(tensors, config, epoch, meta), path)


def load_checkpoint(path: str) -> Checkpoint:
    return read_checkpoint(path)


def restore_model(checkpoint: Checkpoint, model: Optional[GenConViT] = None) -> GenConViT:
    """
    把检查点载入模型；不提供模型时按检查点里的配置新建

    异常:
        UnknownTensorError / CheckpointShapeError: 名称或形状与模型不一致
    """
    if model is None:
        model = GenConViT(checkpoint.model_config())
    model.load_state_dict(checkpoint.model_state())
    return model


def restore_optimizers(checkpoint: Checkpoint, optimizers: Mapping[str, Adam]) -> None:
    steps = checkpoint.meta.get("optimizer_steps", {})
    for net, opt in optimizers.items():
        opt.load_state_arrays(f"{OPTIM_PREFIX}/{net}", checkpoint.optimizer_arrays(net), int(steps.get(net, 0)))
