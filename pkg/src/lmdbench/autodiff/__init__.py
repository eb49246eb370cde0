"""Minimal reverse-mode automatic differentiation over dense tensors."""

from .check import gradcheck
from .core import Tape, Tensor, backward, current_tape, new_tape, no_grad
from .ops import (add, block_complex_linear, complex_gelu, concat, conv2d, down2, fft2, gelu,
                  ifft2, layernorm, linear, mse_loss, mul, pad2d, real_dot, reshape, scale, sigmoid, softmax,
                  softshrink, tensor_sum, transpose, up2)
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Tensor", "Tape", "backward", "current_tape", "new_tape", "no_grad", "gradcheck",
    "add", "block_complex_linear", "complex_gelu", "concat", "conv2d", "down2", "fft2", "gelu",
    "ifft2", "layernorm", "linear", "mse_loss", "mul", "pad2d", "real_dot", "reshape", "scale", "sigmoid",
    "softmax", "softshrink", "tensor_sum", "transpose", "up2",
    "Adam", "AdamState", "adam_step",
]
