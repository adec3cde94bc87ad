"""Rasterization of finger dot images and tactile contact imprints."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..kinematics import DEFAULT_GEOMETRY, FingerGeometry, forward_kinematics
from ..rng import Rng
from .scene import ObjectSpec, SceneConfig, dot_positions

MM_PER_INCH = 25.4


_DOT_SUPPORT_SIGMAS = 3.5


def _rasterize_discs(centers_px: np.ndarray, size: int, radius: float,
                     supersample: int) -> np.ndarray:
    """Intensity in [0,1] per pixel of a union of soft dots.

    Each dot is a Gaussian profile of scale ``radius`` (the lens never
    focuses the markers sharply, so a dot covers a broad graded halo),
    integrated over a supersample x supersample grid per pixel. Dots
    compose by max, so overlaps stay at full intensity.
    """
    cover = np.zeros((size, size))
    reach = _DOT_SUPPORT_SIGMAS * radius
    sub = (np.arange(supersample) + 0.5) / supersample
    for cx, cy in centers_px:
        lo_c = max(int(np.floor(cx - reach)), 0)
        hi_c = min(int(np.ceil(cx + reach)) + 1, size)
        lo_r = max(int(np.floor(cy - reach)), 0)
        hi_r = min(int(np.ceil(cy + reach)) + 1, size)
        if lo_c >= hi_c or lo_r >= hi_r:
            continue
        cols = np.arange(lo_c, hi_c)[:, None] + sub[None, :]
        rows = np.arange(lo_r, hi_r)[:, None] + sub[None, :]
        dx2 = (cols - cx) ** 2
        dy2 = (rows - cy) ** 2
        d2 = dy2[:, :, None, None] + dx2[None, None, :, :]
        patch = np.exp(d2 / (-2.0 * radius * radius)).mean(axis=(1, 3))
        target = cover[lo_r:hi_r, lo_c:hi_c]
        np.maximum(target, patch, out=target)
    return cover


def render_finger_image(angles, cfg: SceneConfig, camera: str,
                        geom: FingerGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Grayscale [size, size] view of the finger's dot features.

    Pure function of its arguments: no noise, no state. Pixel row tracks
    world y and pixel column tracks world x within the camera window.
    """
    if camera not in cfg.camera_segments:
        raise ConfigError(
            f"unknown camera {camera!r}, have {cfg.camera_names()}")
    joints = forward_kinematics(angles, geom)
    dots = dot_positions(joints, cfg, camera)
    px = cfg.world_to_px(camera, dots)
    cover = _rasterize_discs(px, cfg.image_size, cfg.dot_radius_px, cfg.supersample)
    return cfg.background + (cfg.foreground - cfg.background) * cover


def _ridge_from_distance(dist: np.ndarray, amplitude: float,
                         width: float) -> np.ndarray:
    return amplitude * np.exp(-0.5 * (dist / width) ** 2)


def _pixel_grid(size: int):
    rows, cols = np.indices((size, size))
    return cols + 0.5, rows + 0.5


def render_wedge_imprint(size: int, vertex, orientation_deg: float,
                         amplitude: float, width: float) -> np.ndarray:
    """Imprint of a box corner: two ridge rays meeting at 90 degrees.

    The rays leave the vertex at orientation +-45 degrees; intensity falls
    off as a Gaussian of the distance to the nearest ray.
    """
    x, y = _pixel_grid(size)
    vx, vy = vertex
    dx, dy = x - vx, y - vy
    dist = None
    for side in (+45.0, -45.0):
        a = np.deg2rad(orientation_deg + side)
        ux, uy = np.cos(a), np.sin(a)
        t = np.clip(dx * ux + dy * uy, 0.0, None)
        d = np.sqrt((dx - t * ux) ** 2 + (dy - t * uy) ** 2)
        dist = d if dist is None else np.minimum(dist, d)
    return _ridge_from_distance(dist, amplitude, width)


def render_arc_imprint(size: int, contact, orientation_deg: float,
                       radius_px: float, amplitude: float,
                       width: float) -> np.ndarray:
    """Imprint of a cylinder: a smooth circular-arc ridge.

    The arc passes through the contact point; its circle center sits one
    radius away along the orientation normal.
    """
    if radius_px <= 0:
        raise ConfigError(f"arc radius must be positive, got {radius_px}")
    x, y = _pixel_grid(size)
    a = np.deg2rad(orientation_deg)
    cx = contact[0] + radius_px * np.cos(a)
    cy = contact[1] + radius_px * np.sin(a)
    d_center = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
    return _ridge_from_distance(np.abs(d_center - radius_px), amplitude, width)


def _object_radius_px(obj: ObjectSpec, cfg: SceneConfig) -> float:
    px_per_mm = cfg.tactile_window / cfg.tactile_mm_per_window
    return 0.5 * obj.size * MM_PER_INCH * px_per_mm


def tactile_calibration_image(cfg: SceneConfig) -> np.ndarray:
    """The sensor's at-rest reference frame: a smooth fixed gradient."""
    size = cfg.tactile_raw_size
    x, y = _pixel_grid(size)
    return (0.12
            + 0.10 * np.sin(np.pi * x / size) * np.sin(np.pi * y / size)
            + 0.06 * x / size)


def render_tactile_imprint(obj: ObjectSpec, rng: Rng, cfg: SceneConfig,
                           mode: str = "direct"):
    """Contact imprint for an object with jittered pose and pixel noise.

    mode "direct" returns the post-difference, post-crop window the
    classifier consumes. Mode "raw" returns (raw, calibration) full-size
    images for the difference-and-crop preprocessing path.
    """
    if mode not in ("direct", "raw"):
        raise ConfigError(f"tactile mode must be 'direct' or 'raw', got {mode!r}")
    size = cfg.tactile_raw_size
    r0, c0 = cfg.tactile_crop
    w = cfg.tactile_window
    center = (c0 + w / 2.0 + rng.uniform(lo=-cfg.tactile_jitter_px,
                                         hi=cfg.tactile_jitter_px),
              r0 + w / 2.0 + rng.uniform(lo=-cfg.tactile_jitter_px,
                                         hi=cfg.tactile_jitter_px))
    orientation = rng.uniform(lo=0.0, hi=360.0)
    if obj.shape == "box":
        imprint = render_wedge_imprint(size, center, orientation,
                                       cfg.tactile_amplitude,
                                       cfg.tactile_ridge_width_px)
    else:
        imprint = render_arc_imprint(size, center, orientation,
                                     _object_radius_px(obj, cfg),
                                     cfg.tactile_amplitude,
                                     cfg.tactile_ridge_width_px)
    noise = rng.normal(size=(size, size), std=cfg.tactile_noise_std)
    if mode == "direct":
        window = (imprint + noise)[r0:r0 + w, c0:c0 + w]
        return np.clip(window, 0.0, 1.0)
    calib = tactile_calibration_image(cfg)
    raw = np.clip(calib + imprint + noise, 0.0, 1.0)
    return raw, calib
