"""
公共夹具
"""

import logging

import numpy as np
import pytest

from datapipe.synthetic import gen_synthetic
from tensorcore.tensor import default_dtype
from tests.helpers import micro_config

logging.basicConfig(level=logging.INFO)


@pytest.fixture
def f64():
    """在 float64 下构建参数和张量，用于梯度检查"""
    with default_dtype(np.float64):
        yield


@pytest.fixture
def micro():
    return micro_config()


@pytest.fixture
def synthetic_root(tmp_path):
    """每类 4 个视频、每个视频 3 帧的小数据集；划分比例保证三个划分都有两类视频"""
    root = tmp_path / "synthetic"
    gen_synthetic(4, 3, seed=3, out_root=str(root), size=16, split_ratios=(0.5, 0.25, 0.25))
    return str(root)
