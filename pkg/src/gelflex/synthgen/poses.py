"""Pose sampling: free curls across the mechanical range and grasp wraps.

Grasp poses encode object size in the joint angles through a fixed wrap
model: bigger objects hold the finger more open. The wrap responds to the
two shapes differently. A cylinder lets the finger conform to its surface,
so its curl tracks diameter steeply; a box's flat faces stop the distal
joints early, which flattens the curl-versus-size slope and shifts its
intercept. The two response ladders interleave: the smallest box sits
within a degree of the next cylinder size, well inside the grasp noise.
Decoding size from angles alone is therefore ambiguous at the collision,
while angles plus the shape label separate every class cleanly.
"""

from __future__ import annotations

import numpy as np

from ..kinematics import ANGLE_MIN_DEG, JOINT_LIMITS_DEG, NUM_JOINTS
from ..rng import Rng
from .scene import SIZE_CLASSES, ObjectSpec

# tip curl for the tightest grasp of each shape, and its slope per inch
# of size; the shallower box response puts the 4.25-inch box within one
# degree of the 4.5-inch cylinder, a collision only the label resolves
WRAP_TIP_BASE_DEG = {"box": 90.0, "cylinder": 99.0}
WRAP_DEG_PER_INCH = {"box": 28.0, "cylinder": 40.0}
# how much of the tip curl each joint picks up, proximal to distal
WRAP_PROFILE = np.array([0.30, 0.45, 0.60, 0.73, 0.87, 1.00])
WRAP_JOINT_NOISE_DEG = 2.0

# free poses: one tendon drives the curl, so poses live near a curl family
FREE_TIP_LO_DEG = 8.0
FREE_TIP_HI_DEG = 112.0
FREE_SHAPE_LO = 0.3
FREE_SHAPE_HI = 1.0
FREE_JOINT_JITTER_DEG = 1.5

_JOINT_FRACTIONS = np.arange(1, NUM_JOINTS + 1) / NUM_JOINTS


def _finish(angles: np.ndarray) -> np.ndarray:
    """Sort into the monotone curl ordering and clip to the joint limits.

    The limits rise from base to tip, so clipping a sorted vector against
    them keeps it sorted.
    """
    return np.clip(np.sort(angles), ANGLE_MIN_DEG, JOINT_LIMITS_DEG)


def sample_free_pose(rng: Rng) -> np.ndarray:
    """Empty-gripper pose: tip curl spans the full sensing range.

    The curl profile blends linear and quadratic joint loadings, imitating
    a single tendon with varying stiffness, plus small per-joint jitter.
    """
    tip = rng.uniform(lo=FREE_TIP_LO_DEG, hi=FREE_TIP_HI_DEG)
    blend = rng.uniform(lo=FREE_SHAPE_LO, hi=FREE_SHAPE_HI)
    profile = blend * _JOINT_FRACTIONS + (1.0 - blend) * _JOINT_FRACTIONS ** 2
    jitter = rng.normal(size=NUM_JOINTS, std=FREE_JOINT_JITTER_DEG)
    return _finish(tip * profile + jitter)


def grasp_tip_curl(obj: ObjectSpec) -> float:
    """Mean fingertip curl for wrapping an object, degrees."""
    base = WRAP_TIP_BASE_DEG[obj.shape]
    slope = WRAP_DEG_PER_INCH[obj.shape]
    return base - slope * (obj.size - SIZE_CLASSES[0])


def sample_grasp_pose(rng: Rng, obj: ObjectSpec) -> np.ndarray:
    """Pose of the finger wrapped around an object, with per-joint noise."""
    tip = grasp_tip_curl(obj)
    noise = rng.normal(size=NUM_JOINTS, std=WRAP_JOINT_NOISE_DEG)
    return _finish(tip * WRAP_PROFILE + noise)


def sample_pose(rng: Rng, grasp: ObjectSpec | None = None) -> np.ndarray:
    """One pose: free curl when grasp is None, else a wrap around grasp."""
    if grasp is None:
        return sample_free_pose(rng)
    return sample_grasp_pose(rng, grasp)
