"""
数据常量定义
类别标签、数据划分名称、清单格式和帧采样模式
"""

# 类别标签常量
LABEL_REAL = 0   # 真实视频
LABEL_FAKE = 1   # 伪造视频

# 目录名到标签，标签只由所在目录决定
CLASS_DIRS = {
    "real": LABEL_REAL,
    "fake": LABEL_FAKE,
}
LABEL_NAMES = {LABEL_REAL: "REAL", LABEL_FAKE: "FAKE"}

# 数据划分常量
SPLIT_TRAIN = "train"
SPLIT_VALID = "valid"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VALID, SPLIT_TEST)
DEFAULT_SPLIT_RATIOS = (0.80, 0.15, 0.05)

# 每个视频采样的帧数
FRAMES_TRAIN = 30
FRAMES_EVAL = 15

# 帧采样模式
SAMPLE_UNIFORM = "uniform"
SAMPLE_FIRST = "first"
SAMPLE_RANDOM = "random"
SAMPLE_MODES = (SAMPLE_UNIFORM, SAMPLE_FIRST, SAMPLE_RANDOM)

# 支持的图片格式
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

# 清单文件：制表符分隔，无表头，路径相对于清单所在目录
MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ["path", "label", "video_id", "split"]

# 随机数流编号，不同用途的随机数互不干扰
STREAM_AUGMENT = 0
STREAM_FRAMES = 1
STREAM_SHUFFLE = 2
STREAM_REPARAM = 3
