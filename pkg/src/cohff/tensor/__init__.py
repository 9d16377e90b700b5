"""Minimal dense reverse-mode autodiff engine (float64)."""

from .core import Tape, Tensor, as_tensor, backward, grad_enabled, no_grad
from .gradcheck import finite_diff_check, relative_error
from .losses import class_weights_from_labels, focal_loss, weighted_cross_entropy
from .nn import Linear, Module, Parameter, xavier_uniform
from .ops import (
    activation, add, bilinear_sample2d, concat, conv2d, depthwise3d, depthwise_conv3d, exp, index,
    linear, log, log_softmax, matmul, mean, mul, relu, reshape, sigmoid, softmax, stack, sub, sum,
    transpose,
)
from .optim import Adam, sgd_step, zero_grads

__all__ = [
    "Adam", "Linear", "Module", "Parameter", "Tape", "Tensor", "activation", "add", "as_tensor", "backward",
    "bilinear_sample2d", "class_weights_from_labels", "concat", "conv2d", "depthwise3d",
    "depthwise_conv3d", "exp", "finite_diff_check", "focal_loss", "grad_enabled", "index", "linear",
    "log", "log_softmax", "matmul", "mean", "mul", "no_grad", "relative_error", "relu", "reshape",
    "sgd_step", "sigmoid", "softmax", "stack", "sub", "sum", "transpose", "weighted_cross_entropy",
    "xavier_uniform", "zero_grads",
]
