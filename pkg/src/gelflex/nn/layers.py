"""Stateful layers and the Module container they hang off.

A Module auto-registers parameters and child modules in attribute-assignment
order, which fixes the serialization order of every checkpoint. Weight init
draws exclusively from an explicitly passed Rng, so a model's initial state
is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from . import functional as F
from .tensor import Tensor, concat


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        """Yield (dotted_name, tensor) in declaration order, depth first."""
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self):
        object.__setattr__(self, "training", True)
        for m in self._modules.values():
            m.train()
        return self

    def eval(self):
        object.__setattr__(self, "training", False)
        for m in self._modules.values():
            m.eval()
        return self

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _he_weight(rng: Rng, shape, fan_in: int) -> Tensor:
    std = float(np.sqrt(2.0 / fan_in))
    return Tensor(rng.normal(size=shape, std=std).astype(np.float32),
                  requires_grad=True)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, *, rng: Rng):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.weight = _he_weight(rng, (out_channels, in_channels, kernel, kernel), fan_in)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, *, rng: Rng):
        super().__init__()
        self.weight = _he_weight(rng, (in_features, out_features), in_features)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float64))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float64))

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm2d(x, self.gamma, self.beta,
                             self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)


class MaxPool2d(Module):
    def __init__(self, kernel: int = 2, stride: int | None = None):
        super().__init__()
        self.kernel = kernel
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return F.maxpool2d(x, self.kernel, self.stride)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.relu(x)


class Sigmoid(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.sigmoid(x)


class Softmax(Module):
    def __init__(self, axis: int = -1):
        super().__init__()
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return F.softmax(x, self.axis)


class Flatten(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x.reshape(x.shape[0], -1)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(layers):
            setattr(self, f"layer{i}", layer)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def modulate(features, gamma, beta):
    """Apply the multiplicative-plus-additive correction f * (1 + gamma) + beta.

    Written as f + f * gamma + beta so that zero gamma and beta reproduce the
    features exactly rather than through a rounded multiply by 1 + 0.
    Accepts Tensors (differentiable) or plain arrays alike.
    """
    return features + features * gamma + beta


class Incorporator(Module):
    """Correct a feature vector with a scale and shift predicted from context.

    The context one-hot is projected onto an embedding, and two linear maps
    turn the embedding into gamma and beta; the output is f * (1 + gamma) +
    beta. Both maps start at zero, so an untrained Incorporator passes
    features through unchanged and training only ever has to learn the
    correction, never to first undo a random perturbation.
    """

    def __init__(self, feature_dim: int, context_dim: int, *, rng: Rng):
        super().__init__()
        self.context_dim = context_dim
        self.embed = Linear(context_dim, feature_dim, rng=rng.spawn("embed"))
        self.gamma_map = Linear(feature_dim, feature_dim, rng=rng.spawn("gamma"))
        self.beta_map = Linear(feature_dim, feature_dim, rng=rng.spawn("beta"))
        for head in (self.gamma_map, self.beta_map):
            head.weight.data[:] = 0.0
            head.bias.data[:] = 0.0

    def forward(self, features: Tensor, context: Tensor) -> Tensor:
        embedding = self.embed(context)
        gamma = self.gamma_map(embedding)
        beta = self.beta_map(embedding)
        return modulate(features, gamma, beta)


def incorporate(features, labels, params: Incorporator):
    """Class-conditioned feature correction: f * (1 + gamma) + beta.

    labels are integer class ids (scalar or one per feature row); gamma and
    beta come from the params module's per-class linear maps. Differentiable
    with respect to features and every parameter of params.
    """
    labels = np.atleast_1d(np.asarray(labels))
    ids = labels.astype(np.int64)
    if labels.ndim != 1 or np.any(ids != labels):
        raise ValueError(f"labels must be integer class ids, got {labels!r}")
    if ids.min() < 0 or ids.max() >= params.context_dim:
        raise ValueError(
            f"label out of range: got {ids.tolist()}, "
            f"expected ids in [0, {params.context_dim})")
    n = features.shape[0]
    if len(ids) == 1:
        ids = np.repeat(ids, n)
    elif len(ids) != n:
        raise ValueError(
            f"got {len(ids)} labels for {n} feature rows")
    context = Tensor(np.eye(params.context_dim, dtype=np.float32)[ids])
    return params(features, context)
