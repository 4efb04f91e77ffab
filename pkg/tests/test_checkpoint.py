"""
检查点测试
"""

import struct

import numpy as np
import pytest

from models.genconvit import GenConViT, predict_video
from services.checkpoint_service import (
    MAGIC,
    read_checkpoint,
    restore_model,
    save_checkpoint,
    write_checkpoint,
)
from services.model_factory import ModelFactory
from tests.helpers import micro_config
from utils.errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    TruncatedCheckpointError,
    UnknownTensorError,
)


@pytest.fixture
def saved(tmp_path, micro):
    model = GenConViT(micro, seed=1)
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(model, path, epoch=3, meta={"note": "unit"})
    return model, path


def _frames(n=3, size=8):
    return [np.random.default_rng(i).standard_normal((3, size, size)).astype(np.float32) for i in range(n)]


def test_file_starts_with_magic_and_version(saved):
    _, path = saved
    with open(path, "rb") as f:
        raw = f.read()
    assert raw[:8] == MAGIC
    assert struct.unpack("<I", raw[8:12])[0] == 1


def test_read_then_write_is_byte_identical(saved, tmp_path):
    _, path = saved
    checkpoint = read_checkpoint(path)
    assert checkpoint.epoch == 3
    assert checkpoint.meta == {"note": "unit"}
    copy = write_checkpoint(checkpoint, str(tmp_path / "copy.ckpt"))
    with open(path, "rb") as a, open(copy, "rb") as b:
        assert a.read() == b.read()


def test_bad_magic_and_version(saved, tmp_path):
    _, path = saved
    with open(path, "rb") as f:
        raw = bytearray(f.read())

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"NOTACKPT" + bytes(raw[8:]))
    with pytest.raises(CheckpointVersionError):
        read_checkpoint(str(bad_magic))

    raw[8:12] = struct.pack("<I", 2)
    bad_version = tmp_path / "version.ckpt"
    bad_version.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError):
        read_checkpoint(str(bad_version))


def test_truncated_files(saved, tmp_path):
    _, path = saved
    with open(path, "rb") as f:
        raw = f.read()
    for name, data in (("head.ckpt", raw[:10]), ("tail.ckpt", raw[:-7])):
        target = tmp_path / name
        target.write_bytes(data)
        with pytest.raises(TruncatedCheckpointError):
            read_checkpoint(str(target))


def test_restore_gives_identical_predictions(saved):
    model, path = saved
    restored = ModelFactory.load_model(path)
    assert restored.config == model.config
    before = predict_video(_frames(), model)
    after = predict_video(_frames(), restored)
    assert after.per_frame_a == before.per_frame_a
    assert after.per_frame_b == before.per_frame_b
    assert after.video_score == before.video_score


def test_load_into_different_architecture_lists_mismatches(saved):
    _, path = saved
    other = micro_config(ae_channels=(3, 4, 2))
    with pytest.raises(CheckpointShapeError) as info:
        ModelFactory.load_model(path, other)
    assert "net_a.ae.enc.0.conv.weight" in str(info.value)


def test_extra_tensor_is_rejected(saved, micro):
    _, path = saved
    checkpoint = read_checkpoint(path)
    checkpoint.tensors["net_a.extra.weight"] = np.zeros(2, dtype=np.float32)
    with pytest.raises(UnknownTensorError):
        restore_model(checkpoint, GenConViT(micro))


def test_optimizer_state_survives(tmp_path, micro):
    model = GenConViT(micro)
    optimizers = ModelFactory.create_optimizers(model, lr=1e-3)
    for net, opt in optimizers.items():
        opt.step({p: np.full(p.shape, 0.1, dtype=p.dtype) for p in opt.params.values()})
    path = save_checkpoint(model, str(tmp_path / "opt.ckpt"), optimizers)

    checkpoint = read_checkpoint(path)
    assert checkpoint.meta["optimizer_steps"] == {"a": 1, "b": 1}
    assert checkpoint.optimizer_arrays("a")
    assert not any(k.startswith("optim/") for k in checkpoint.model_state())
