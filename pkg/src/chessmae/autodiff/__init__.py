"""Minimal reverse-mode autodiff over numpy arrays."""

from .ops import (add, conv2d, depthwise_conv7x7, gelu, grn, layer_norm, linear, mean, mse_loss, mul,
                  permute, reshape, scale, sub, sum)
from .optim import Adam, AdamState, adam_step
from .tensor import Node, Tensor, as_tensor, check_finite, default_dtype, float64_mode, no_grad

__all__ = [
    "Tensor", "Node", "as_tensor", "check_finite", "default_dtype", "float64_mode", "no_grad",
    "add", "sub", "mul", "scale", "sum", "mean", "reshape", "permute", "gelu", "linear",
    "conv2d", "depthwise_conv7x7", "layer_norm", "grn", "mse_loss",
    "Adam", "AdamState", "adam_step",
]
