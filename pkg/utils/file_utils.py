"""
文件处理工具
提供目录、图片文件枚举和目录内容哈希等功能
"""

import hashlib
import os
import logging

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ['.png', '.jpg', '.jpeg']


def ensure_dir(directory):
    """
    确保目录存在，如果不存在则创建

    参数:
        directory (str): 目录路径
    """
    os.makedirs(directory, exist_ok=True)


def get_file_extension(file_path):
    """
    获取文件扩展名

    参数:
        file_path (str): 文件路径

    返回:
        str: 文件扩展名（小写）
    """
    return os.path.splitext(file_path)[1].lower()


def is_image_file(file_path):
    """
    检查文件是否为支持的图片格式（PNG/JPEG）

    参数:
        file_path (str): 文件路径

    返回:
        bool: 是否为图片文件
    """
    return get_file_extension(file_path) in IMAGE_EXTENSIONS


def list_image_files(directory):
    """
    列出目录下（不递归）的图片文件，按文件名排序

    参数:
        directory (str): 目录路径

    返回:
        list: 图片文件路径列表
    """
    if not os.path.isdir(directory):
        return []
    names = sorted(n for n in os.listdir(directory) if is_image_file(n))
    return [os.path.join(directory, n) for n in names if os.path.isfile(os.path.join(directory, n))]


def get_all_files(directory, extensions=None):
    """
    递归获取目录中的所有文件，按相对路径排序

    参数:
        directory (str): 目录路径
        extensions (list): 文件扩展名列表，如果为None则获取所有文件

    返回:
        list: 文件路径列表
    """
    files = []
    for root, dirs, filenames in os.walk(directory):
        dirs.sort()
        for filename in sorted(filenames):
            file_path = os.path.join(root, filename)
            if extensions is None or get_file_extension(file_path) in extensions:
                files.append(file_path)
    return files


def tree_hash(directory):
    """
    目录内容的 sha256：相对路径与文件字节一起参与计算

    参数:
        directory (str): 目录路径

    返回:
        str: 十六进制哈希
    """
    digest = hashlib.sha256()
    for path in get_all_files(directory):
        rel = os.path.relpath(path, directory).replace(os.sep, '/')
        digest.update(rel.encode('utf-8') + b'\0')
        with open(path, 'rb') as f:
            digest.update(f.read())
    return digest.hexdigest()


def is_writable_target(path):
    """
    检查路径能否作为输出目录：已存在时须为可写目录，不存在时其最近的已存在上级须可写

    参数:
        path (str): 目标路径

    返回:
        bool: 是否可写
    """
    path = os.path.abspath(path)
    if os.path.exists(path):
        return os.path.isdir(path) and os.access(path, os.W_OK)
    parent = os.path.dirname(path)
    while parent and not os.path.exists(parent):
        next_parent = os.path.dirname(parent)
        if next_parent == parent:
            break
        parent = next_parent
    return os.path.isdir(parent) and os.access(parent, os.W_OK)
