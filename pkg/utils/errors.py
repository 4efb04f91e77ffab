"""
异常定义
项目中所有模块共用的异常层级
"""


class GenConViTError(Exception):
    """项目异常基类"""


# 张量引擎相关
class ShapeMismatchError(GenConViTError, ValueError):
    """张量形状不匹配"""


class DTypeMismatchError(GenConViTError, TypeError):
    """同一计算图中出现了不同的数据类型"""


class ZeroSizeOutputError(GenConViTError, ValueError):
    """算子输出尺寸为零"""


class DegenerateWindowError(GenConViTError, ValueError):
    """池化窗口大于输入或非正"""


class DegenerateVarianceError(GenConViTError, ValueError):
    """训练模式下每个通道只有一个元素，无法估计方差"""


class NonScalarLossError(GenConViTError, ValueError):
    """反向传播的起点不是标量"""


class DisconnectedGraphError(GenConViTError, RuntimeError):
    """损失没有连接到当前的梯度记录带"""


class NonFiniteGradientError(GenConViTError, FloatingPointError):
    """梯度中出现NaN或Inf"""


class LabelRangeError(GenConViTError, ValueError):
    """类别标签越界"""


# 模型相关
class ConfigError(GenConViTError, ValueError):
    """配置无效"""


class HeadDivisibilityError(GenConViTError, ValueError):
    """嵌入维度不能被注意力头数整除"""


class OddGridError(GenConViTError, ValueError):
    """Patch merging 需要偶数网格"""


class EmptyFrameListError(GenConViTError, ValueError):
    """视频预测时没有任何帧"""


# 数据相关
class DatasetError(GenConViTError):
    """数据集错误"""


class EmptyClassError(DatasetError, ValueError):
    """某个类别没有任何视频"""


class EmptyDirectoryError(DatasetError, ValueError):
    """目录中没有图片"""


class NonRGBImageError(DatasetError, ValueError):
    """图片不是三通道RGB"""


class SynthesisError(DatasetError, OSError):
    """合成数据集写入失败"""


# 评估指标相关
class LengthMismatchError(GenConViTError, ValueError):
    """分数与标签长度不一致"""


class SingleClassError(GenConViTError, ValueError):
    """ROC/AUC 需要两个类别同时存在"""


# 检查点相关
class CheckpointError(GenConViTError):
    """检查点错误"""


class CheckpointVersionError(CheckpointError):
    """魔数或格式版本不匹配"""


class TruncatedCheckpointError(CheckpointError):
    """检查点文件被截断"""


class UnknownTensorError(CheckpointError, KeyError):
    """检查点中存在模型没有的张量名"""


class CheckpointShapeError(CheckpointError, ValueError):
    """检查点张量形状与模型配置不一致"""


# 训练相关
class NonFiniteLossError(GenConViTError, FloatingPointError):
    """训练损失出现NaN或Inf"""


# 命令行退出码
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID_ARGUMENT = 2
EXIT_EMPTY_DIRECTORY = 3
EXIT_MISSING_DATA = 4
EXIT_NON_FINITE_LOSS = 5


def exit_code_for(error: BaseException) -> int:
    """异常到退出码的映射"""
    if isinstance(error, NonFiniteLossError):
        return EXIT_NON_FINITE_LOSS
    if isinstance(error, (EmptyDirectoryError, EmptyFrameListError)):
        return EXIT_EMPTY_DIRECTORY
    if isinstance(error, (DatasetError, CheckpointError, FileNotFoundError)) and not isinstance(error, SynthesisError):
        return EXIT_MISSING_DATA
    if isinstance(error, (ConfigError, SynthesisError, PermissionError, NotADirectoryError, IsADirectoryError)):
        return EXIT_INVALID_ARGUMENT
    return EXIT_UNEXPECTED
