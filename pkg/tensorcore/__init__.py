"""
张量引擎
numpy 实现的张量、自动微分和 Adam
"""

from tensorcore.tensor import (
    Function,
    GradientMap,
    Tensor,
    as_tensor,
    backward,
    default_dtype,
    get_default_dtype,
    get_tape,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)
from tensorcore.optim import Adam, AdamState, adam_step

__all__ = [
    "Function",
    "GradientMap",
    "Tensor",
    "as_tensor",
    "backward",
    "default_dtype",
    "get_default_dtype",
    "get_tape",
    "is_grad_enabled",
    "no_grad",
    "set_default_dtype",
    "Adam",
    "AdamState",
    "adam_step",
]
