"""Preprocessing, target encoding, augmentation, and dataset splitting.

Angle targets pass through two maps: per-joint standardization with
training-set statistics, then an affine squash of the training z-range onto
[0,1] so a sigmoid output head can represent every target it will be asked
for. Both maps invert exactly at evaluation time. Everything random takes an
owned Rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import Rng


@dataclass(frozen=True)
class NormalizationStats:
    """Training-set angle statistics in degrees plus the z-range squash."""

    mean: np.ndarray
    std: np.ndarray
    range_lo: np.ndarray
    range_hi: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "range_lo": self.range_lo.tolist(),
            "range_hi": self.range_hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(*(np.asarray(d[k], dtype=np.float64)
                     for k in ("mean", "std", "range_lo", "range_hi")))


@dataclass(frozen=True)
class AugmentConfig:
    """Ranges for photometric jitter and the label-noise variance."""

    contrast_lo: float = 0.7
    contrast_hi: float = 1.3
    gain_lo: float = 0.8
    gain_hi: float = 1.2
    label_noise_var: float = 1e-3

    def __post_init__(self):
        if not (self.contrast_lo <= 1.0 <= self.contrast_hi):
            raise ConfigError("contrast range must contain 1.0")
        if not (self.gain_lo <= 1.0 <= self.gain_hi):
            raise ConfigError("gain range must contain 1.0")
        if self.label_noise_var < 0:
            raise ConfigError("label noise variance must be >= 0")


# train extremes map to this far inside (0, 1): a sigmoid head can only
# approach its asymptotes, so targets at exactly 0 or 1 would be unlearnable
SIGMOID_TARGET_MARGIN = 0.1


def fit_normalizer(train_angles: np.ndarray) -> NormalizationStats:
    """Fit per-joint mean/std (population convention) and the sigmoid map.

    The affine range maps the observed z extremes to [margin, 1 - margin]
    so every training target sits in the responsive zone of the sigmoid.
    Must see the training split only; test data never flows in here.
    """
    arr = np.asarray(train_angles, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"fit_normalizer expects [N, joints], got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ConfigError("fit_normalizer needs at least 2 training samples")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    if np.any(std <= 0):
        bad = np.nonzero(std <= 0)[0].tolist()
        raise ConfigError(f"joint columns {bad} are constant; cannot standardize")
    z = (arr - mean) / std
    lo = z.min(axis=0)
    hi = z.max(axis=0)
    pad = (hi - lo) * SIGMOID_TARGET_MARGIN / (1.0 - 2.0 * SIGMOID_TARGET_MARGIN)
    return NormalizationStats(mean=mean, std=std,
                              range_lo=lo - pad, range_hi=hi + pad)


def normalize(angles: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Degrees -> [0,1] sigmoid-domain targets (clipped outside train range)."""
    z = (np.asarray(angles, dtype=np.float64) - stats.mean) / stats.std
    t = (z - stats.range_lo) / (stats.range_hi - stats.range_lo)
    return np.clip(t, 0.0, 1.0)


def denormalize(targets: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """[0,1] targets -> degrees, exact inverse of normalize on the train range."""
    t = np.asarray(targets, dtype=np.float64)
    z = t * (stats.range_hi - stats.range_lo) + stats.range_lo
    return z * stats.std + stats.mean


def add_label_noise(z_targets: np.ndarray, variance: float, rng: Rng) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise; training-set targets only."""
    if variance < 0:
        raise ConfigError("label noise variance must be >= 0")
    arr = np.asarray(z_targets, dtype=np.float64)
    if variance == 0:
        return arr.copy()
    return arr + rng.normal(size=arr.shape, std=float(np.sqrt(variance)))


def apply_photometric(img: np.ndarray, contrast: float, gain: float) -> np.ndarray:
    """Scale deviations from the image mean by contrast, then apply gain.

    Output is clipped back to [0,1]. Geometry is never touched: the angle
    labels describe pixel positions, so spatial jitter would corrupt them.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ConfigError("photometric ops expect intensities in [0,1]")
    m = arr.mean()
    return np.clip(((arr - m) * contrast + m) * gain, 0.0, 1.0)


def augment_image(img: np.ndarray, cfg: AugmentConfig, rng: Rng) -> np.ndarray:
    """Photometric jitter with contrast and gain drawn from cfg's ranges."""
    c = rng.uniform(lo=cfg.contrast_lo, hi=cfg.contrast_hi)
    g = rng.uniform(lo=cfg.gain_lo, hi=cfg.gain_hi)
    return apply_photometric(img, c, g)


def tactile_preprocess(raw: np.ndarray, calibration: np.ndarray,
                       crop: tuple, renorm: float = 1.0) -> np.ndarray:
    """Difference image |raw - calibration|, cropped, scaled by a fixed constant.

    crop is (row0, col0, height, width). The renorm constant is fixed per
    sensor, never per image, so intensity stays comparable across samples.
    """
    raw = np.asarray(raw, dtype=np.float64)
    calibration = np.asarray(calibration, dtype=np.float64)
    if raw.shape != calibration.shape:
        raise ConfigError(
            f"raw {raw.shape} and calibration {calibration.shape} shapes differ")
    r0, c0, h, w = crop
    if r0 < 0 or c0 < 0 or h <= 0 or w <= 0 \
            or r0 + h > raw.shape[0] or c0 + w > raw.shape[1]:
        raise ConfigError(
            f"crop {crop} out of bounds for image shape {raw.shape}")
    if renorm <= 0:
        raise ConfigError("renorm constant must be > 0")
    diff = np.abs(raw - calibration)[r0:r0 + h, c0:c0 + w]
    return np.clip(diff / renorm, 0.0, 1.0)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer class labels -> float32 one-hot rows."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ConfigError(f"one_hot expects a 1-D label vector, got {arr.shape}")
    idx = arr.astype(np.int64)
    if np.any(idx != arr) or idx.min() < 0 or idx.max() >= num_classes:
        raise ConfigError(
            f"labels must be integers in [0, {num_classes}), got range "
            f"[{arr.min()}, {arr.max()}]")
    return np.eye(num_classes, dtype=np.float32)[idx]


def split_indices(n: int, ratio: float, rng: Rng,
                  labels: np.ndarray | None = None) -> tuple:
    """Seeded disjoint exhaustive train/test index split.

    With labels given, the split is stratified: each class contributes
    round(n_class * ratio) training samples.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0,1), got {ratio}")
    if n < 2:
        raise ConfigError("cannot split fewer than 2 samples")
    if labels is None:
        perm = rng.permutation(n)
        cut = int(n * ratio + 0.5)
        if cut == 0 or cut == n:
            raise ConfigError(f"ratio {ratio} leaves an empty split for n={n}")
        return np.sort(perm[:cut]), np.sort(perm[cut:])

    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ConfigError(f"labels shape {labels.shape} does not match n={n}")
    train_parts, test_parts = [], []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        perm = rng.spawn(f"class{cls}").permutation(len(idx))
        cut = int(len(idx) * ratio + 0.5)
        if cut == 0 or cut == len(idx):
            raise ConfigError(
                f"ratio {ratio} leaves class {cls} empty on one side")
        train_parts.append(idx[perm[:cut]])
        test_parts.append(idx[perm[cut:]])
    return (np.sort(np.concatenate(train_parts)),
            np.sort(np.concatenate(test_parts)))
