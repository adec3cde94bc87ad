"""Planar finger model: geometry, forward kinematics, and error metrics.

The finger is a chain of 7 segments joined by 6 revolute joints. Segment 0 is
the stationary proximal piece, so the first joint anchors the world frame.
Joint angles are absolute, measured against the world x-axis in degrees, not
relative to the previous segment: rotating one joint does not re-aim the
segments after it.

The transmission loads the joints unevenly: each joint's travel ceiling
rises linearly from a third of the tip's range at the base to the full
range at the tip, so the finger always curls tip-first and the reachable
workspace stays compact enough for a close camera view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

NUM_SEGMENTS = 7
NUM_JOINTS = 6
ANGLE_MIN_DEG = 0.0
ANGLE_MAX_DEG = 120.0
# per-joint travel ceilings, base to tip
JOINT_LIMITS_DEG = tuple(40.0 + 16.0 * i for i in range(NUM_JOINTS))
DEFAULT_SEGMENT_MM = 20.0


@dataclass(frozen=True)
class FingerGeometry:
    """Segment lengths in mm plus the pose of the stationary base joint."""

    segment_lengths: tuple = tuple([DEFAULT_SEGMENT_MM] * NUM_SEGMENTS)
    base_position: tuple = (0.0, 0.0)
    base_orientation_deg: float = 0.0

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.segment_lengths)
        if len(lengths) != NUM_SEGMENTS:
            raise ConfigError(
                f"finger needs exactly {NUM_SEGMENTS} segments, got {len(lengths)}"
            )
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ConfigError("segment lengths must be positive and finite")
        if len(self.base_position) != 2 or not all(
                np.isfinite(v) for v in self.base_position):
            raise ConfigError("base position must be a finite 2D point")
        object.__setattr__(self, "segment_lengths", lengths)
        object.__setattr__(self, "base_position",
                           tuple(float(v) for v in self.base_position))

    def scaled(self, factor: float) -> "FingerGeometry":
        return FingerGeometry(
            tuple(v * factor for v in self.segment_lengths),
            self.base_position, self.base_orientation_deg)


DEFAULT_GEOMETRY = FingerGeometry()


def _check_angles(angles: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(angles, dtype=np.float64)
    if arr.shape[-1] != NUM_JOINTS:
        raise ConfigError(
            f"{name} must have {NUM_JOINTS} joint angles, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite angles")
    return arr


def forward_kinematics(angles, geom: FingerGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Joint positions [.., 7, 2] in mm for absolute joint angles in degrees.

    Accepts a single angle vector [6] or a batch [N, 6]. Point 0 is the
    stationary base joint; point i+1 adds segment i+1 aimed at angle theta_i.
    """
    arr = _check_angles(angles, "angles")
    rad = np.deg2rad(arr + geom.base_orientation_deg)
    steps = np.stack([np.cos(rad), np.sin(rad)], axis=-1)
    steps = steps * np.asarray(geom.segment_lengths[1:]).reshape(
        (1,) * (arr.ndim - 1) + (NUM_JOINTS, 1))
    base = np.broadcast_to(
        np.asarray(geom.base_position),
        arr.shape[:-1] + (1, 2)).astype(np.float64)
    return np.concatenate([base, base + np.cumsum(steps, axis=-2)], axis=-2)


def last_joint_position(angles, geom: FingerGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    return forward_kinematics(angles, geom)[..., -1, :]


def accumulative_error(pred, truth, geom: FingerGeometry = DEFAULT_GEOMETRY):
    """Euclidean distance in mm between the last joints of two solutions.

    Vectorizes over leading batch axes; returns a scalar for single vectors.
    """
    p = last_joint_position(pred, geom)
    t = last_joint_position(truth, geom)
    dist = np.sqrt(((p - t) ** 2).sum(axis=-1))
    return float(dist) if dist.ndim == 0 else dist


def angle_error_summary(pred, truth) -> dict:
    """Per-joint absolute errors in degrees with their sum and max."""
    p = _check_angles(pred, "pred")
    t = _check_angles(truth, "truth")
    if p.shape != t.shape:
        raise ConfigError(f"angle shapes differ: {p.shape} vs {t.shape}")
    err = np.abs(p - t)
    return {
        "per_joint_abs_err": err,
        "sum_abs_err": err.sum(axis=-1),
        "max_abs_err": err.max(axis=-1),
    }
