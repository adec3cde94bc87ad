"""Labeled dataset generation and the on-disk container format.

A dataset is a directory holding `manifest.json` (schema and generator
versions, seed, config, field layout, split indices, label maps) and
`samples.f32` (every sample's fields concatenated, little-endian float32,
in manifest field order). Regenerating with the same inputs reproduces both
files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import GENERATOR_VERSION, SCHEMA_VERSION
from ..errors import ConfigError, DataIOError, SchemaMismatch
from ..kinematics import DEFAULT_GEOMETRY, FingerGeometry
from ..rng import Rng
from ..datapipe import split_indices
from .poses import sample_free_pose, sample_grasp_pose
from .render import render_finger_image, render_tactile_imprint
from .scene import SHAPE_CLASSES, SIZE_CLASSES, ObjectSpec, SceneConfig, all_objects

DATASET_KINDS = ("proprio_single", "proprio_double", "tactile", "size")
SPLIT_RATIOS = {
    "proprio_single": 0.8,
    "proprio_double": 0.8,
    "tactile": 0.75,
    "size": 0.9,
}


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace, plain floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _worker_count() -> int:
    env = os.environ.get("GELFLEX_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"GELFLEX_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ConfigError("GELFLEX_THREADS must be >= 1")
        return n
    return min(8, os.cpu_count() or 1)


def _scene_dict(cfg: SceneConfig) -> dict:
    d = asdict(cfg)
    d["camera_windows"] = {k: list(v) for k, v in sorted(d["camera_windows"].items())}
    d["camera_segments"] = {k: list(v) for k, v in sorted(d["camera_segments"].items())}
    d["tactile_crop"] = list(d["tactile_crop"])
    return d


def _geometry_dict(geom: FingerGeometry) -> dict:
    return {
        "segment_lengths": list(geom.segment_lengths),
        "base_position": list(geom.base_position),
        "base_orientation_deg": geom.base_orientation_deg,
    }


def geometry_from_dict(d: dict) -> FingerGeometry:
    return FingerGeometry(tuple(d["segment_lengths"]),
                          tuple(d["base_position"]),
                          float(d["base_orientation_deg"]))


def scene_from_dict(d: dict) -> SceneConfig:
    d = dict(d)
    d["camera_windows"] = {k: tuple(v) for k, v in d["camera_windows"].items()}
    d["camera_segments"] = {k: tuple(v) for k, v in d["camera_segments"].items()}
    d["tactile_crop"] = tuple(d["tactile_crop"])
    return SceneConfig(**d)


@dataclass
class Dataset:
    """In-memory view of a generated dataset."""

    manifest: dict
    arrays: dict

    @property
    def kind(self) -> str:
        return self.manifest["kind"]

    @property
    def count(self) -> int:
        return self.manifest["count"]

    @property
    def train_indices(self) -> np.ndarray:
        return np.asarray(self.manifest["splits"]["train"], dtype=np.int64)

    @property
    def test_indices(self) -> np.ndarray:
        return np.asarray(self.manifest["splits"]["test"], dtype=np.int64)

    def field(self, name: str) -> np.ndarray:
        if name not in self.arrays:
            raise ConfigError(
                f"dataset kind {self.kind!r} has no field {name!r}; "
                f"have {sorted(self.arrays)}")
        return self.arrays[name]

    def labels(self, name: str) -> np.ndarray:
        return self.field(name).reshape(-1).astype(np.int64)


def _proprio_sample(i: int, master: Rng, cfg: SceneConfig,
                    geom: FingerGeometry, cameras, grasp_fraction: float):
    rng = master.spawn(f"sample.{i}")
    if rng.spawn("kind").uniform() < grasp_fraction:
        obj = all_objects()[rng.spawn("obj").integers(8)]
        angles = sample_grasp_pose(rng.spawn("pose"), obj)
    else:
        angles = sample_free_pose(rng.spawn("pose"))
    image = np.stack([render_finger_image(angles, cfg, cam, geom)
                      for cam in cameras])
    return {"image": image, "angles": angles}


def _tactile_sample(i: int, master: Rng, cfg: SceneConfig,
                    shape_label: int, mode: str):
    rng = master.spawn(f"sample.{i}")
    size = SIZE_CLASSES[rng.spawn("size").integers(len(SIZE_CLASSES))]
    obj = ObjectSpec(SHAPE_CLASSES[shape_label], size)
    rendered = render_tactile_imprint(obj, rng.spawn("imprint"), cfg, mode)
    label = np.array([shape_label], dtype=np.float64)
    if mode == "direct":
        return {"image": rendered[None], "label": label}
    raw, calib = rendered
    return {"raw": raw[None], "calib": calib[None], "label": label}


def _size_sample(i: int, master: Rng, cfg: SceneConfig, geom: FingerGeometry,
                 shape_label: int, size_label: int):
    rng = master.spawn(f"sample.{i}")
    obj = ObjectSpec(SHAPE_CLASSES[shape_label], SIZE_CLASSES[size_label])
    angles = sample_grasp_pose(rng.spawn("pose"), obj)
    image = render_finger_image(angles, cfg, "mid", geom)[None]
    return {
        "image": image,
        "angles": angles,
        "shape": np.array([shape_label], dtype=np.float64),
        "size": np.array([size_label], dtype=np.float64),
    }


def generate_dataset(kind: str, count: int, seed: int, out_dir,
                     cfg: SceneConfig | None = None,
                     geom: FingerGeometry = DEFAULT_GEOMETRY,
                     tactile_mode: str = "direct",
                     grasp_fraction: float = 0.5) -> Dataset:
    """Generate, persist, and return a labeled dataset.

    Stratification is exact: tactile datasets hold equal shape counts and
    size datasets equal counts per (shape, size) cell, so the count must
    divide evenly (2 for tactile, 8 for size).
    """
    if kind not in DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}, have {DATASET_KINDS}")
    if count < 2:
        raise ConfigError("dataset needs at least 2 samples")
    cfg = cfg or SceneConfig()
    cfg.validate_for_geometry(geom)
    if tactile_mode not in ("direct", "raw"):
        raise ConfigError(f"tactile mode must be 'direct' or 'raw', got {tactile_mode!r}")
    master = Rng(seed).spawn("dataset", kind)

    if kind in ("proprio_single", "proprio_double"):
        cameras = ("mid",) if kind == "proprio_single" else ("mid", "tip")

        def build(i):
            return _proprio_sample(i, master, cfg, geom, cameras, grasp_fraction)

        strat_labels = None
    elif kind == "tactile":
        if count % 2:
            raise ConfigError("tactile dataset count must be even (half per shape)")
        order = master.spawn("order").permutation(count)
        shape_of = np.empty(count, dtype=np.int64)
        shape_of[order[:count // 2]] = 0
        shape_of[order[count // 2:]] = 1

        def build(i):
            return _tactile_sample(i, master, cfg, int(shape_of[i]), tactile_mode)

        strat_labels = shape_of
    else:
        if count % 8:
            raise ConfigError(
                "size dataset count must be a multiple of 8 "
                "(equal samples per shape-size cell)")
        per_cell = count // 8
        order = master.spawn("order").permutation(count)
        cell_of = np.empty(count, dtype=np.int64)
        for cell in range(8):
            cell_of[order[cell * per_cell:(cell + 1) * per_cell]] = cell

        def build(i):
            cell = int(cell_of[i])
            return _size_sample(i, master, cfg, geom, cell // 4, cell % 4)

        strat_labels = cell_of

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        samples = list(pool.map(build, range(count)))

    field_names = list(samples[0].keys())
    arrays = {name: np.stack([s[name] for s in samples]).astype(np.float32)
              for name in field_names}
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"generator produced non-finite values in {name!r}")

    ratio = SPLIT_RATIOS[kind]
    train_idx, test_idx = split_indices(count, ratio, master.spawn("split"),
                                        labels=strat_labels)

    config_block = {
        "kind": kind,
        "count": count,
        "seed": seed,
        "split_ratio": ratio,
        "tactile_mode": tactile_mode if kind == "tactile" else None,
        "grasp_fraction": grasp_fraction if kind.startswith("proprio") else None,
        "scene": _scene_dict(cfg),
        "geometry": _geometry_dict(geom),
        "generator_version": GENERATOR_VERSION,
    }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        **config_block,
        "cfg_hash": config_digest(config_block),
        "fields": [{"name": n, "shape": list(arrays[n].shape[1:])}
                   for n in field_names],
        "splits": {"train": train_idx.tolist(), "test": test_idx.tolist()},
        "label_maps": {"shape": list(SHAPE_CLASSES), "size": list(SIZE_CLASSES)},
    }
    ds = Dataset(manifest=manifest, arrays=arrays)
    save_dataset(ds, out_dir)
    return ds


def save_dataset(ds: Dataset, out_dir):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = np.concatenate(
            [ds.arrays[f["name"]].reshape(ds.count, -1)
             for f in ds.manifest["fields"]], axis=1).astype("<f4")
        (out / "samples.f32").write_bytes(rows.tobytes())
        (out / "manifest.json").write_text(
            json.dumps(ds.manifest, indent=1, sort_keys=True) + "\n")
    except OSError as e:
        raise DataIOError(f"failed to write dataset to {out}: {e}") from e


def load_dataset(path) -> Dataset:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        payload = (root / "samples.f32").read_bytes()
    except OSError as e:
        raise DataIOError(f"cannot read dataset at {root}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataIOError(f"corrupt manifest in {root}: {e}") from e
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"dataset schema {version} does not match this build ({SCHEMA_VERSION})")
    count = manifest["count"]
    sizes = [int(np.prod(f["shape"])) for f in manifest["fields"]]
    row_floats = sum(sizes)
    if len(payload) != count * row_floats * 4:
        raise DataIOError(
            f"payload length {len(payload)} does not match "
            f"{count} samples x {row_floats} floats")
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, row_floats)
    arrays = {}
    offset = 0
    for f, width in zip(manifest["fields"], sizes):
        arrays[f["name"]] = rows[:, offset:offset + width].reshape(
            count, *f["shape"]).copy()
        offset += width
    return Dataset(manifest=manifest, arrays=arrays)
