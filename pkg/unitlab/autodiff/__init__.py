"""Tape-based reverse-mode automatic differentiation."""

from .gradcheck import grad_check
from .tensor import (
    GradientMap,
    Tape,
    Tensor,
    avg_pool2d,
    backward,
    conv2d,
    current_tape,
    elementwise,
    expand,
    l2_norm,
    matmul,
    no_grad,
    reduce,
    relu,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    sqrt,
    square,
    transpose,
)

__all__ = [
    "GradientMap",
    "Tape",
    "Tensor",
    "avg_pool2d",
    "backward",
    "conv2d",
    "current_tape",
    "elementwise",
    "expand",
    "grad_check",
    "l2_norm",
    "matmul",
    "no_grad",
    "reduce",
    "relu",
    "reshape",
    "sigmoid",
    "softmax_cross_entropy",
    "sqrt",
    "square",
    "transpose",
]
