"""Synthetic stand-in for the soft-finger hardware.

Renders dot-feature finger images and tactile contact imprints from sampled
poses and objects, and persists labeled datasets with manifests. Everything is
a pure function of (config, seed), so datasets regenerate byte-identically.
"""

from .scene import (
    SHAPE_CLASSES,
    SIZE_CLASSES,
    ObjectSpec,
    SceneConfig,
)
from .poses import sample_free_pose, sample_grasp_pose, sample_pose
from .render import (
    render_arc_imprint,
    render_finger_image,
    render_tactile_imprint,
    render_wedge_imprint,
)
from .dataset import Dataset, generate_dataset, load_dataset

__all__ = [
    "SceneConfig", "ObjectSpec", "SIZE_CLASSES", "SHAPE_CLASSES",
    "sample_pose", "sample_free_pose", "sample_grasp_pose",
    "render_finger_image", "render_tactile_imprint",
    "render_arc_imprint", "render_wedge_imprint",
    "Dataset", "generate_dataset", "load_dataset",
]
