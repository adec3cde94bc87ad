"""Builders for the three perception networks.

Every builder takes an explicit Rng so two calls with the same seed produce
bit-identical initial weights, and attaches a ``spec`` dict describing how to
rebuild the same architecture when loading a checkpoint.
"""

from __future__ import annotations

from .errors import ConfigError
from .kinematics import ANGLE_MAX_DEG, NUM_JOINTS
from .nn import (
    BatchNorm2d,
    Conv2d,
    Flatten,
    Incorporator,
    Linear,
    MaxPool2d,
    Module,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    Tensor,
    concat,
)
from .rng import Rng
from .synthgen import SHAPE_CLASSES, SIZE_CLASSES

PROPRIO_FILTERS = (16, 32, 64, 64)
PROPRIO_KERNEL = 3
PROPRIO_STRIDE = 2
SIZE_ARCHS = ("mlp", "two_path", "incorporator")
SIZE_HIDDEN = 32
MIN_IMAGE_SIZE = 16


def _conv_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


class ProprioCnn(Module):
    """Strided conv stack regressing six normalized joint angles from dots.

    Four Conv-BatchNorm-ReLU blocks halve the spatial extent each step, then
    a convolution spanning the remaining extent maps to one value per joint
    and a sigmoid pins the outputs to (0, 1) normalized-angle space. A second
    camera enters as an extra input channel, so it widens only the first
    convolution.
    """

    def __init__(self, cameras: int = 1, image_size: int = 64, *, rng: Rng):
        super().__init__()
        if cameras not in (1, 2):
            raise ConfigError(f"cameras must be 1 or 2, got {cameras}")
        if image_size < MIN_IMAGE_SIZE:
            raise ConfigError(
                f"image size {image_size} is below the minimum "
                f"{MIN_IMAGE_SIZE} the conv stack can digest")
        blocks = []
        channels = cameras
        extent = image_size
        for i, filters in enumerate(PROPRIO_FILTERS):
            blocks.append(Conv2d(channels, filters, PROPRIO_KERNEL,
                                 stride=PROPRIO_STRIDE, padding=1,
                                 rng=rng.spawn(f"conv{i}")))
            blocks.append(BatchNorm2d(filters))
            blocks.append(ReLU())
            channels = filters
            extent = _conv_extent(extent, PROPRIO_KERNEL, PROPRIO_STRIDE, 1)
        if extent < 1:
            raise ConfigError(f"image size {image_size} collapses to nothing")
        self.backbone = Sequential(*blocks)
        self.head = Conv2d(channels, NUM_JOINTS, extent, rng=rng.spawn("head"))
        self.squash = Sigmoid()
        self.spec = {"family": "proprio", "cameras": cameras,
                     "image_size": image_size}

    def forward(self, x: Tensor) -> Tensor:
        out = self.squash(self.head(self.backbone(x)))
        return out.reshape(out.shape[0], NUM_JOINTS)


class TactileLenet(Module):
    """Two convolutions, two fully connected layers, softmax over shapes."""

    def __init__(self, window: int = 32, *, rng: Rng):
        super().__init__()
        extent = window
        for _ in range(2):
            extent = extent - 4
            if extent < 2:
                raise ConfigError(
                    f"tactile window {window} is too small for 5x5 kernels")
            extent //= 2
        self.features = Sequential(
            Conv2d(1, 6, 5, rng=rng.spawn("conv0")),
            ReLU(),
            MaxPool2d(2),
            Conv2d(6, 16, 5, rng=rng.spawn("conv1")),
            ReLU(),
            MaxPool2d(2),
            Flatten(),
        )
        self.classifier = Sequential(
            Linear(16 * extent * extent, 120, rng=rng.spawn("fc0")),
            ReLU(),
            Linear(120, len(SHAPE_CLASSES), rng=rng.spawn("fc1")),
            Softmax(axis=1),
        )
        self.spec = {"family": "tactile", "window": window}

    def forward(self, x: Tensor) -> Tensor:
        return self.classifier(self.features(x))


def _mlp_path(in_dim: int, rng: Rng) -> Sequential:
    return Sequential(
        Linear(in_dim, SIZE_HIDDEN, rng=rng.spawn("fc0")),
        ReLU(),
        Linear(SIZE_HIDDEN, SIZE_HIDDEN, rng=rng.spawn("fc1")),
        ReLU(),
    )


def _size_head(in_dim: int, rng: Rng) -> Sequential:
    return Sequential(
        Linear(in_dim, SIZE_HIDDEN, rng=rng.spawn("fc0")),
        ReLU(),
        Linear(SIZE_HIDDEN, len(SIZE_CLASSES), rng=rng.spawn("fc1")),
        Softmax(axis=1),
    )


class _SizeEstimatorBase(Module):
    """Shared input handling: angles arrive in degrees, shape as a one-hot.

    Degrees are scaled by the joint limit before entering any layer so the
    first linear layer sees inputs of order one regardless of pose.
    """

    def __init__(self, arch: str):
        super().__init__()
        self.spec = {"family": "size", "arch": arch}
        self.arch = arch

    @staticmethod
    def _scaled(angles: Tensor) -> Tensor:
        return angles * (1.0 / ANGLE_MAX_DEG)


class MlpSizeEstimator(_SizeEstimatorBase):
    """Single trunk over the concatenated angle and shape vector."""

    def __init__(self, *, rng: Rng):
        super().__init__("mlp")
        in_dim = NUM_JOINTS + len(SHAPE_CLASSES)
        self.trunk = _mlp_path(in_dim, rng.spawn("trunk"))
        self.head = _size_head(SIZE_HIDDEN, rng.spawn("head"))

    def forward(self, angles: Tensor, shape: Tensor) -> Tensor:
        x = concat([self._scaled(angles), shape], axis=1)
        return self.head(self.trunk(x))


class TwoPathSizeEstimator(_SizeEstimatorBase):
    """Separate angle and shape paths whose features concatenate at the head."""

    def __init__(self, *, rng: Rng):
        super().__init__("two_path")
        self.angle_path = _mlp_path(NUM_JOINTS, rng.spawn("angle"))
        self.shape_path = _mlp_path(len(SHAPE_CLASSES), rng.spawn("shape"))
        self.head = _size_head(2 * SIZE_HIDDEN, rng.spawn("head"))

    def forward(self, angles: Tensor, shape: Tensor) -> Tensor:
        a = self.angle_path(self._scaled(angles))
        s = self.shape_path(shape)
        return self.head(concat([a, s], axis=1))


class IncorporatorSizeEstimator(_SizeEstimatorBase):
    """Angle path whose features are rescaled and shifted by the shape label."""

    def __init__(self, *, rng: Rng):
        super().__init__("incorporator")
        self.angle_path = _mlp_path(NUM_JOINTS, rng.spawn("angle"))
        self.modulator = Incorporator(SIZE_HIDDEN, len(SHAPE_CLASSES),
                                      rng=rng.spawn("modulator"))
        self.head = _size_head(SIZE_HIDDEN, rng.spawn("head"))

    def forward(self, angles: Tensor, shape: Tensor) -> Tensor:
        f = self.angle_path(self._scaled(angles))
        return self.head(self.modulator(f, shape))


def build_proprio_cnn(cameras: int = 1, image_size: int = 64, *,
                      rng: Rng) -> ProprioCnn:
    return ProprioCnn(cameras, image_size, rng=rng)


def build_tactile_lenet(window: int = 32, *, rng: Rng) -> TactileLenet:
    return TactileLenet(window, rng=rng)


def build_size_estimator(arch: str, *, rng: Rng) -> _SizeEstimatorBase:
    if arch == "mlp":
        return MlpSizeEstimator(rng=rng)
    if arch == "two_path":
        return TwoPathSizeEstimator(rng=rng)
    if arch == "incorporator":
        return IncorporatorSizeEstimator(rng=rng)
    raise ConfigError(
        f"unknown size-estimator architecture {arch!r}, expected one of "
        f"{', '.join(SIZE_ARCHS)}")


def build_model(spec: dict, *, rng: Rng) -> Module:
    """Rebuild a model from its ``spec`` dict (used when loading checkpoints)."""
    family = spec.get("family")
    if family == "proprio":
        return build_proprio_cnn(spec["cameras"], spec["image_size"], rng=rng)
    if family == "tactile":
        return build_tactile_lenet(spec["window"], rng=rng)
    if family == "size":
        return build_size_estimator(spec["arch"], rng=rng)
    raise ConfigError(f"unknown model family {family!r}")
