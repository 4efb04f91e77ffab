"""
工具模块
提供文件处理、CSV处理工具函数和异常定义
"""

from utils.file_utils import (
    ensure_dir,
    get_file_extension,
    is_image_file,
    list_image_files,
    get_all_files,
    tree_hash,
    is_writable_target
)

from utils.csv_utils import (
    read_csv,
    write_csv,
    read_comment_line,
    validate_csv_structure
)

__all__ = [
    'ensure_dir',
    'get_file_extension',
    'is_image_file',
    'list_image_files',
    'get_all_files',
    'tree_hash',
    'is_writable_target',
    'read_csv',
    'write_csv',
    'read_comment_line',
    'validate_csv_structure'
]
