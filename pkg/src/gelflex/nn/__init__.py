"""Minimal deterministic differentiable-network engine.

Reverse-mode autodiff over numpy arrays with exactly the operations the
perception networks need: conv2d, batchnorm, relu/sigmoid/softmax, maxpool,
linear, concat, and the feature-modulation node. Storage defaults to float32;
gradient checks run the same graph in float64.
"""

from .tensor import Tensor, add, concat, matmul, mul, sub
from .functional import (
    batchnorm2d,
    conv2d,
    linear,
    maxpool2d,
    relu,
    sigmoid,
    softmax,
)
from .losses import cross_entropy, loss, mse_loss
from .layers import (
    BatchNorm2d,
    Conv2d,
    Flatten,
    Incorporator,
    incorporate,
    modulate,
    Linear,
    MaxPool2d,
    Module,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
)
from .optim import Adam
from .gradcheck import LAYER_KINDS, finite_difference_check, grad_check

__all__ = [
    "Tensor", "add", "sub", "mul", "matmul", "concat",
    "conv2d", "batchnorm2d", "relu", "sigmoid", "softmax", "maxpool2d", "linear",
    "mse_loss", "cross_entropy", "loss",
    "Module", "Sequential", "Conv2d", "BatchNorm2d", "Linear", "MaxPool2d",
    "ReLU", "Sigmoid", "Softmax", "Flatten", "Incorporator", "incorporate", "modulate",
    "Adam", "grad_check", "finite_difference_check", "LAYER_KINDS",
]
