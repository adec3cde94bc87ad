"""Single-file model checkpoints: one JSON header line plus raw weights.

The header carries everything needed to rebuild the architecture and the
angle-normalization statistics; the payload is the parameters as little-endian
float32 followed by the buffers as little-endian float64, both in declaration
order. The format is append-only friendly and diffable at the header level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION
from .datapipe import NormalizationStats
from .errors import DataIOError, SchemaMismatch
from .models import build_model
from .nn import Module
from .rng import Rng

_PARAM_DTYPE = "<f4"
_BUFFER_DTYPE = "<f8"


@dataclass
class Checkpoint:
    model: Module
    seed: int
    norm_stats: NormalizationStats | None
    extra: dict
    header: dict


def save_checkpoint(model: Module, path, *, seed: int,
                    norm_stats: NormalizationStats | None = None,
                    extra: dict | None = None) -> None:
    path = Path(path)
    params = list(model.named_parameters())
    buffers = list(model.named_buffers())
    header = {
        "schema_version": SCHEMA_VERSION,
        "spec": model.spec,
        "seed": int(seed),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params],
        "buffers": [{"name": n, "shape": list(b.shape)} for n, b in buffers],
        "norm_stats": norm_stats.to_dict() if norm_stats is not None else None,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode() + b"\n"
    blob += b"".join(np.ascontiguousarray(p.data, dtype=_PARAM_DTYPE).tobytes()
                     for _, p in params)
    blob += b"".join(np.ascontiguousarray(b, dtype=_BUFFER_DTYPE).tobytes()
                     for _, b in buffers)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    newline = blob.find(b"\n")
    if newline < 0:
        raise DataIOError(f"checkpoint {path} has no header line")
    try:
        header = json.loads(blob[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataIOError(f"checkpoint {path} header is not JSON: {exc}") from exc
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"checkpoint {path} has schema version {version}, "
            f"this build reads {SCHEMA_VERSION}")

    model = build_model(header["spec"], rng=Rng(header["seed"]))
    params = list(model.named_parameters())
    buffers = list(model.named_buffers())
    stored_p = [(d["name"], tuple(d["shape"])) for d in header["params"]]
    stored_b = [(d["name"], tuple(d["shape"])) for d in header["buffers"]]
    if stored_p != [(n, p.shape) for n, p in params] \
            or stored_b != [(n, b.shape) for n, b in buffers]:
        raise SchemaMismatch(
            f"checkpoint {path} parameter layout does not match the "
            f"architecture its spec rebuilds")

    payload = blob[newline + 1:]
    n_param = sum(p.size for _, p in params)
    n_buffer = sum(b.size for _, b in buffers)
    expected = 4 * n_param + 8 * n_buffer
    if len(payload) != expected:
        raise DataIOError(
            f"checkpoint {path} payload holds {len(payload)} bytes, "
            f"expected {expected}")
    flat_p = np.frombuffer(payload[:4 * n_param], dtype=_PARAM_DTYPE)
    flat_b = np.frombuffer(payload[4 * n_param:], dtype=_BUFFER_DTYPE)
    at = 0
    for _, p in params:
        p.data = flat_p[at:at + p.size].reshape(p.shape).astype(np.float32)
        at += p.size
    at = 0
    for _, b in buffers:
        b[...] = flat_b[at:at + b.size].reshape(b.shape)
        at += b.size

    stats = header.get("norm_stats")
    norm_stats = NormalizationStats.from_dict(stats) if stats else None
    return Checkpoint(model=model, seed=header["seed"], norm_stats=norm_stats,
                      extra=header.get("extra", {}), header=header)
