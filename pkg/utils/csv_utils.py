"""
CSV处理工具函数
提供指标文件的读取、写入和结构校验功能
"""

import os
import logging
import pandas as pd
from typing import List, Optional, Tuple

logger = logging.getLogger(__name__)

# 浮点数按完整精度写出，重复写出的字节保持一致
FLOAT_FORMAT = '%.17g'


def read_csv(file_path: str, comment: Optional[str] = None) -> Optional[pd.DataFrame]:
    """
    读取CSV文件并返回DataFrame

    参数:
        file_path (str): CSV文件路径
        comment (str): 注释行前缀，例如 '#'

    返回:
        Optional[pd.DataFrame]: 读取的DataFrame，文件不存在则返回None
    """
    logger.info(f"正在读取CSV文件: {file_path}")
    if not os.path.exists(file_path):
        logger.error(f"文件不存在: {file_path}")
        return None
    return pd.read_csv(file_path, comment=comment, encoding='utf-8')


def write_csv(df: pd.DataFrame, file_path: str, header_line: Optional[str] = None,
              float_format: str = FLOAT_FORMAT) -> str:
    """
    将DataFrame写入CSV文件

    参数:
        df (pd.DataFrame): 要写入的DataFrame
        file_path (str): 输出CSV文件路径
        header_line (str): 可选，写在表头之前的一行注释
        float_format (str): 浮点数格式

    返回:
        str: 输出路径
    """
    os.makedirs(os.path.dirname(os.path.abspath(file_path)), exist_ok=True)
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        if header_line:
            f.write(header_line.rstrip('\n') + '\n')
        df.to_csv(f, index=False, float_format=float_format, lineterminator='\n')
    logger.info(f"CSV文件写入成功: {file_path}")
    return file_path


def read_comment_line(file_path: str, prefix: str = '#') -> Optional[str]:
    """
    读取文件第一行的注释（去掉前缀）

    返回:
        Optional[str]: 注释内容，没有注释则返回None
    """
    with open(file_path, 'r', encoding='utf-8') as f:
        first = f.readline().rstrip('\n')
    if first.startswith(prefix):
        return first[len(prefix):].strip()
    return None


def validate_csv_structure(df: pd.DataFrame, required_fields: List[str]) -> Tuple[bool, str]:
    """
    验证CSV文件结构是否包含必要的字段

    参数:
        df (pd.DataFrame): 要验证的DataFrame
        required_fields (List[str]): 必需的字段列表

    返回:
        Tuple[bool, str]: (是否有效, 错误信息)
    """
    if df is None:
        return False, "CSV文件为空"

    missing_fields = [field for field in required_fields if field not in df.columns]
    if missing_fields:
        return False, f"CSV文件缺少必要字段: {', '.join(missing_fields)}"

    return True, ""
