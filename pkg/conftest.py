"""
pytest 根配置
把仓库根目录加入模块搜索路径
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
