"""
数据管线测试
划分、帧采样、增强、预处理、合成数据与加载器
"""

import os

import numpy as np
import pytest

from datapipe.augment import (
    TRANSFORM_ORDER,
    TRANSFORMS,
    AugmentConfig,
    augment,
    draw_augment_plan,
    sample_rng,
)
from datapipe.constants import LABEL_FAKE, LABEL_REAL, MANIFEST_NAME, SPLITS
from datapipe.dataset import (
    assign_splits,
    filter_split,
    group_by_video,
    load_records,
    read_manifest,
    scan_dataset,
    summarize,
    write_manifest,
)
from datapipe.frames import frame_indices, load_image, sample_frames, save_image
from datapipe.loader import FrameLoader, load_video_frames, select_training_frames
from datapipe.synthetic import gen_synthetic
from datapipe.transforms import denormalize, normalize, to_uint8
from utils.errors import ConfigError, EmptyClassError, EmptyDirectoryError, NonRGBImageError, SynthesisError
from utils.file_utils import tree_hash


def _image(seed=0, size=32):
    return np.random.default_rng(seed).integers(0, 256, (size, size, 3), dtype=np.uint8)


def _make_tree(root, videos):
    """videos: {"real/a": 帧数, ...}"""
    for video, n in videos.items():
        video_dir = os.path.join(root, video)
        os.makedirs(video_dir, exist_ok=True)
        for f in range(n):
            save_image(_image(f, 8), os.path.join(video_dir, f"frame_{f:03d}.png"))


# ---------------------------------------------------------------------------
# 划分
# ---------------------------------------------------------------------------

def test_assign_splits_ratio_counts():
    splits = assign_splits([f"vid_{i:04d}" for i in range(100)])
    counts = {s: list(splits.values()).count(s) for s in SPLITS}
    assert counts == {"train": 80, "valid": 15, "test": 5}


def test_assign_splits_is_deterministic_and_order_free():
    names = [f"v{i}" for i in range(1000)]
    a = assign_splits(names, seed=7)
    b = assign_splits(list(reversed(names)), seed=7)
    assert a == b
    assert len(a) == 1000


def test_scan_dataset_keeps_each_video_in_one_split(tmp_path):
    root = str(tmp_path)
    _make_tree(root, {f"{c}/vid_{i}": 2 for c in ("real", "fake") for i in range(6)})
    records = scan_dataset(root, (0.5, 0.25, 0.25), seed=1)
    assert len(records) == 24

    split_of = {}
    for r in records:
        assert split_of.setdefault(r.video_id, r.split) == r.split
        assert r.label == (LABEL_REAL if r.video_id.startswith("real/") else LABEL_FAKE)
    # 同名的真假视频落在同一划分
    for i in range(6):
        assert split_of[f"real/vid_{i}"] == split_of[f"fake/vid_{i}"]
    assert sum(len(filter_split(records, s)) for s in SPLITS) == len(records)


def test_scan_dataset_skips_unreadable_frames(tmp_path):
    root = str(tmp_path)
    _make_tree(root, {"real/a": 2, "real/b": 1, "fake/a": 1, "fake/b": 1})
    open(os.path.join(root, "real", "a", "broken.png"), "wb").close()
    warnings = []
    records = scan_dataset(root, warnings=warnings)
    assert len(records) == 5
    assert warnings == [os.path.join(root, "real", "a", "broken.png")]


def test_scan_dataset_empty_class(tmp_path):
    _make_tree(str(tmp_path), {"real/a": 1})
    with pytest.raises(EmptyClassError):
        scan_dataset(str(tmp_path))


def test_manifest_roundtrip(tmp_path):
    root = str(tmp_path)
    _make_tree(root, {"real/a": 2, "fake/a": 2, "real/b": 1, "fake/b": 1})
    records = scan_dataset(root)
    path = write_manifest(records, os.path.join(root, MANIFEST_NAME))
    assert read_manifest(path) == records
    assert load_records(root) == records

    table = summarize(records)
    assert table["frames"].sum() == 6
    assert table["videos"].sum() == 4


# ---------------------------------------------------------------------------
# 帧采样
# ---------------------------------------------------------------------------

def test_frame_indices_uniform_and_short_video():
    assert frame_indices(150, 15) == list(range(0, 150, 10))
    assert frame_indices(10, 15) == list(range(10))
    assert frame_indices(40, 4, "first") == [0, 1, 2, 3]


def test_frame_indices_random_sorted_unique_and_seeded():
    a = frame_indices(100, 10, "random", seed=5)
    assert a == sorted(set(a))
    assert len(a) == 10
    assert a == frame_indices(100, 10, "random", seed=5)


def test_sample_frames(tmp_path):
    _make_tree(str(tmp_path), {"v": 6})
    frames = sample_frames(str(tmp_path / "v"), 3)
    assert len(frames) == 3
    np.testing.assert_array_equal(frames[1], _image(2, 8))

    os.makedirs(tmp_path / "empty")
    with pytest.raises(EmptyDirectoryError):
        sample_frames(str(tmp_path / "empty"), 3)


# ---------------------------------------------------------------------------
# 增强
# ---------------------------------------------------------------------------

def test_augment_rate_zero_is_identity():
    image = _image()
    cfg = AugmentConfig(rate=0.0).validate()
    for i in range(20):
        assert augment(image, cfg, sample_rng(0, 0, i, 0)) is image


def test_augment_rate_frequency():
    """rate=0.9 时一万次抽样的增强比例在 [0.885, 0.915] 内"""
    cfg = AugmentConfig(rate=0.9)
    hits = sum(draw_augment_plan(cfg, sample_rng(0, 0, i, 0)).augmented for i in range(10000))
    assert 0.885 <= hits / 10000 <= 0.915


def test_augment_plan_follows_fixed_order():
    cfg = AugmentConfig(rate=1.0, p_each=1.0)
    assert draw_augment_plan(cfg, sample_rng(1, 0, 0, 0)).transforms == list(TRANSFORM_ORDER)
    only = AugmentConfig(rate=1.0, p_each=1.0, enabled=("clahe", "horizontal_flip"))
    assert draw_augment_plan(only, sample_rng(1, 0, 0, 0)).transforms == ["horizontal_flip", "clahe"]


@pytest.mark.parametrize("name", TRANSFORM_ORDER)
def test_each_transform_keeps_shape_and_dtype(name):
    out = TRANSFORMS[name](_image(), AugmentConfig(), np.random.default_rng(0))
    assert out.shape == (32, 32, 3)
    assert out.dtype == np.uint8


def test_augment_is_reproducible_per_sample():
    cfg = AugmentConfig(rate=1.0)
    image = _image(3)
    np.testing.assert_array_equal(augment(image, cfg, sample_rng(2, 1, 5, 0)),
                                  augment(image, cfg, sample_rng(2, 1, 5, 0)))


def test_augment_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(rate=1.5).validate()
    with pytest.raises(ConfigError):
        AugmentConfig(enabled=("blur",)).validate()
    with pytest.raises(ConfigError):
        AugmentConfig(noise_var=(50.0, 10.0)).validate()


# ---------------------------------------------------------------------------
# 预处理
# ---------------------------------------------------------------------------

def test_normalize_values():
    image = np.full((4, 4, 3), 128, dtype=np.uint8)
    image[0, 0] = 255
    x = normalize(image, 4)
    assert x.shape == (3, 4, 4)
    assert x.dtype == np.float32
    assert abs(x[0, 1, 1]) < 0.01
    assert x[:, 0, 0].tolist() == pytest.approx([1.0, 1.0, 1.0])


def test_normalize_resizes_and_inverts():
    image = _image(4, 16)
    x = normalize(image, 16)
    restored = to_uint8(denormalize(x))
    assert np.abs(restored.astype(int) - image.astype(int)).max() <= 1
    assert normalize(image, 8).shape == (3, 8, 8)


def test_normalize_rejects_non_rgb():
    with pytest.raises(NonRGBImageError):
        normalize(np.zeros((8, 8), dtype=np.uint8), 8)
    with pytest.raises(NonRGBImageError):
        normalize(np.zeros((8, 8, 4), dtype=np.uint8), 8)


# ---------------------------------------------------------------------------
# 合成数据
# ---------------------------------------------------------------------------

def test_gen_synthetic_counts_and_layout(tmp_path):
    result = gen_synthetic(3, 2, seed=0, out_root=str(tmp_path), size=16, real_multiplier=2)
    assert result["real_images"] == 12
    assert result["fake_images"] == 6
    assert result["videos"] == 6
    assert result["records"] == 18
    assert os.path.isfile(os.path.join(str(tmp_path), MANIFEST_NAME))
    assert load_image(os.path.join(str(tmp_path), "real", "vid_0000", "frame_000.png")).shape == (16, 16, 3)


def test_gen_synthetic_is_byte_deterministic(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    gen_synthetic(2, 2, seed=9, out_root=a, size=16)
    gen_synthetic(2, 2, seed=9, out_root=b, size=16)
    assert tree_hash(a) == tree_hash(b)


def test_gen_synthetic_fake_differs_from_real(synthetic_root):
    real = load_image(os.path.join(synthetic_root, "real", "vid_0000", "frame_000.png")).astype(int)
    fake = load_image(os.path.join(synthetic_root, "fake", "vid_0000", "frame_000.png")).astype(int)
    assert np.abs(real - fake).mean() > 0


def test_gen_synthetic_errors(tmp_path):
    with pytest.raises(ConfigError):
        gen_synthetic(1, 2, seed=0, out_root=str(tmp_path))
    with pytest.raises(ConfigError):
        gen_synthetic(2, 2, seed=0, out_root=str(tmp_path), size=8)
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(SynthesisError):
        gen_synthetic(2, 2, seed=0, out_root=str(blocker / "out"), size=16)


# ---------------------------------------------------------------------------
# 加载器
# ---------------------------------------------------------------------------

def test_select_training_frames_multiplier(synthetic_root):
    records = load_records(synthetic_root)
    chosen = select_training_frames(records, 1, {LABEL_REAL: 2, LABEL_FAKE: 1})
    labels = [r.label for r in chosen]
    assert labels.count(LABEL_REAL) == 8
    assert labels.count(LABEL_FAKE) == 4


def test_frame_loader_independent_of_workers(synthetic_root):
    records = load_records(synthetic_root)
    cfg = AugmentConfig(rate=1.0)

    def collect(workers):
        loader = FrameLoader(records, 5, 16, cfg, seed=4, workers=workers)
        return list(loader.epoch(1))

    serial, threaded = collect(0), collect(3)
    assert len(serial) == len(FrameLoader(records, 5, 16)) == 5
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.video_ids == b.video_ids
    assert sum(len(batch) for batch in serial) == len(records)
    assert serial[0].images.shape[1:] == (3, 16, 16)


def test_frame_loader_order_depends_on_epoch(synthetic_root):
    loader = FrameLoader(load_records(synthetic_root), 4, 16, seed=0)
    np.testing.assert_array_equal(loader.order(0), loader.order(0))
    assert sorted(loader.order(1).tolist()) == list(range(len(loader.records)))
    assert loader.order(0).tolist() != loader.order(1).tolist()


def test_load_video_frames(synthetic_root):
    groups = group_by_video(load_records(synthetic_root))
    frames = load_video_frames(groups["fake/vid_0001"], 2, 16)
    assert len(frames) == 2
    assert frames[0].shape == (3, 16, 16)
    assert frames[0].dtype == np.float32
