"""Scene configuration, camera model, and graspable object specs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..kinematics import (
    ANGLE_MIN_DEG,
    DEFAULT_GEOMETRY,
    JOINT_LIMITS_DEG,
    NUM_SEGMENTS,
    FingerGeometry,
    forward_kinematics,
)

SIZE_CLASSES = (4.25, 4.5, 4.75, 5.0)
SHAPE_CLASSES = ("box", "cylinder")

# both cameras watch the finger plane through fixed square windows sized
# to the joint-limited workspace; they differ in which segments carry
# visible dot features
DEFAULT_CAMERA_SEGMENTS = {
    "mid": (1, 2, 3, 4, 5, 6),
    "tip": (4, 5, 6),
}
DEFAULT_CAMERA_WINDOWS = {
    "mid": (57.0, 48.0, 59.0),
    "tip": (64.0, 48.0, 58.0),
}


@dataclass(frozen=True)
class SceneConfig:
    """Rendering parameters for finger images and tactile imprints.

    Camera windows are (center_x_mm, center_y_mm, half_extent_mm) squares
    mapped linearly onto the image; camera segments name which finger
    segments carry visible dots in that camera.
    """

    image_size: int = 64
    dots_per_side: int = 3
    dot_radius_px: float = 2.0
    dot_side_offset_mm: float = 7.0
    camera_windows: dict = field(
        default_factory=lambda: dict(DEFAULT_CAMERA_WINDOWS))
    camera_segments: dict = field(
        default_factory=lambda: dict(DEFAULT_CAMERA_SEGMENTS))
    background: float = 0.05
    foreground: float = 1.0
    supersample: int = 4
    tactile_window: int = 32
    tactile_raw_size: int = 48
    tactile_crop: tuple = (8, 8)
    tactile_mm_per_window: float = 40.0
    tactile_amplitude: float = 0.65
    tactile_ridge_width_px: float = 1.6
    tactile_noise_std: float = 0.02
    tactile_jitter_px: float = 3.0

    def __post_init__(self):
        if self.image_size < 16:
            raise ConfigError(f"image size must be >= 16, got {self.image_size}")
        if self.dot_radius_px < 1.0:
            raise ConfigError(f"dot radius must be >= 1 px, got {self.dot_radius_px}")
        if self.dots_per_side < 1:
            raise ConfigError("need at least one dot per segment side")
        if self.supersample < 1:
            raise ConfigError("supersample factor must be >= 1")
        if not 0.0 <= self.background < self.foreground <= 1.0:
            raise ConfigError("need 0 <= background < foreground <= 1")
        if self.tactile_window < 16:
            raise ConfigError("tactile window must be >= 16 px")
        r0, c0 = self.tactile_crop
        if r0 < 0 or c0 < 0 \
                or r0 + self.tactile_window > self.tactile_raw_size \
                or c0 + self.tactile_window > self.tactile_raw_size:
            raise ConfigError("tactile crop window exceeds the raw image")
        if set(self.camera_windows) != set(self.camera_segments):
            raise ConfigError("camera windows and segment maps must name the same cameras")
        for cam, segs in self.camera_segments.items():
            if not segs or any(s < 1 or s >= NUM_SEGMENTS for s in segs):
                raise ConfigError(
                    f"camera {cam!r} segments must be within 1..{NUM_SEGMENTS - 1}")

    def camera_names(self):
        return sorted(self.camera_windows)

    def mm_per_px(self, camera: str) -> float:
        _, _, half = self.camera_windows[camera]
        return 2.0 * half / self.image_size

    def world_to_px(self, camera: str, points_mm: np.ndarray) -> np.ndarray:
        """World mm -> fractional pixel coords (col, row), origin top-left."""
        cx, cy, half = self.camera_windows[camera]
        scale = self.image_size / (2.0 * half)
        pts = np.asarray(points_mm, dtype=np.float64)
        out = np.empty_like(pts)
        out[..., 0] = (pts[..., 0] - (cx - half)) * scale
        out[..., 1] = (pts[..., 1] - (cy - half)) * scale
        return out

    def validate_for_geometry(self, geom: FingerGeometry = DEFAULT_GEOMETRY):
        """Reject camera windows that can lose a dot entirely.

        Every dot must stay at least partially in frame for every pose in
        the mechanical range. Each dot coordinate is a sum of per-joint
        cos/sin terms, so its extremes over the per-joint angle boxes occur
        with each joint at 0, at 90 if reachable, or at its travel limit;
        sweeping that grid bounds the reachable set exactly.
        """
        levels = [sorted({ANGLE_MIN_DEG, min(90.0, cap), cap})
                  for cap in JOINT_LIMITS_DEG]
        grid = np.array(np.meshgrid(
            *levels, indexing="ij")).reshape(6, -1).T
        joints = forward_kinematics(grid, geom)
        for cam in self.camera_names():
            dots = dot_positions(joints, self, cam)
            px = self.world_to_px(cam, dots.reshape(-1, 2))
            r = self.dot_radius_px
            inside = ((px[:, 0] > -r) & (px[:, 0] < self.image_size + r)
                      & (px[:, 1] > -r) & (px[:, 1] < self.image_size + r))
            if not inside.all():
                raise ConfigError(
                    f"camera {cam!r} window loses dots for in-range poses; "
                    "enlarge the window or shrink the finger")


def dot_fractions(cfg: SceneConfig) -> np.ndarray:
    """Positions of dots along a segment, as fractions of its length."""
    k = cfg.dots_per_side
    return (np.arange(k) + 1.0) / (k + 1.0)


def dot_positions(joints: np.ndarray, cfg: SceneConfig, camera: str) -> np.ndarray:
    """World positions [.., n_dots, 2] of the dots a camera can see.

    joints is forward_kinematics output [.., 7, 2]. Dots sit on both sides
    of each visible segment, offset perpendicular to the segment axis.
    """
    segs = cfg.camera_segments[camera]
    fracs = dot_fractions(cfg)
    starts = joints[..., [s - 1 for s in segs], :]
    ends = joints[..., list(segs), :]
    axis = ends - starts
    length = np.sqrt((axis ** 2).sum(axis=-1, keepdims=True))
    u = axis / length
    n = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    # [.., seg, frac, 2] anchor points along each segment
    anchor = starts[..., :, None, :] + axis[..., :, None, :] * fracs.reshape(
        (1,) * (starts.ndim - 2) + (1, -1, 1))
    off = n[..., :, None, :] * cfg.dot_side_offset_mm
    dots = np.concatenate([anchor + off, anchor - off], axis=-2)
    return dots.reshape(dots.shape[:-3] + (-1, 2))


@dataclass(frozen=True)
class ObjectSpec:
    """A graspable test object: shape class plus its size in inches."""

    shape: str
    size: float

    def __post_init__(self):
        if self.shape not in SHAPE_CLASSES:
            raise ConfigError(
                f"shape must be one of {SHAPE_CLASSES}, got {self.shape!r}")
        if not any(abs(self.size - s) < 1e-9 for s in SIZE_CLASSES):
            raise ConfigError(
                f"size must be one of {SIZE_CLASSES}, got {self.size}")

    @property
    def shape_label(self) -> int:
        return SHAPE_CLASSES.index(self.shape)

    @property
    def size_label(self) -> int:
        return int(np.argmin([abs(self.size - s) for s in SIZE_CLASSES]))


def all_objects():
    """The eight test objects: every shape at every size."""
    return [ObjectSpec(shape, size)
            for shape in SHAPE_CLASSES for size in SIZE_CLASSES]
