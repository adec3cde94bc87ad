"""Checkpoint persistence: bit-exact roundtrips and corruption guards."""

import json

import numpy as np
import pytest

from gelflex.checkpoint import load_checkpoint, save_checkpoint
from gelflex.datapipe import NormalizationStats, fit_normalizer
from gelflex.errors import DataIOError, SchemaMismatch
from gelflex.models import build_proprio_cnn, build_size_estimator
from gelflex.nn import Tensor
from gelflex.rng import Rng


def _trained_like_proprio():
    """A model whose batchnorm buffers have moved off their initial values."""
    model = build_proprio_cnn(1, 64, rng=Rng(40))
    model.train()
    x = Tensor(Rng(41).uniform(size=(4, 1, 64, 64)).astype(np.float32))
    model(x)
    return model


def test_roundtrip_params_and_buffers_bit_exact(tmp_path):
    model = _trained_like_proprio()
    path = tmp_path / "proprio.ckpt"
    save_checkpoint(model, path, seed=40)
    back = load_checkpoint(path)
    orig_p = dict(model.named_parameters())
    for name, p in back.model.named_parameters():
        assert p.data.tobytes() == orig_p[name].data.tobytes()
    orig_b = dict(model.named_buffers())
    for name, b in back.model.named_buffers():
        assert b.tobytes() == orig_b[name].tobytes()
    assert back.seed == 40


def test_loaded_model_predicts_identically(tmp_path):
    model = _trained_like_proprio()
    model.eval()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, seed=40)
    back = load_checkpoint(path)
    back.model.eval()
    x = Tensor(Rng(42).uniform(size=(2, 1, 64, 64)).astype(np.float32))
    np.testing.assert_array_equal(model(x).data, back.model(x).data)


def test_norm_stats_and_extra_roundtrip(tmp_path):
    angles = Rng(43).uniform(size=(50, 6), lo=0.0, hi=120.0)
    stats = fit_normalizer(angles)
    model = build_size_estimator("mlp", rng=Rng(44))
    path = tmp_path / "s.ckpt"
    save_checkpoint(model, path, seed=44, norm_stats=stats,
                    extra={"epochs": 12, "final_loss": 0.25})
    back = load_checkpoint(path)
    assert isinstance(back.norm_stats, NormalizationStats)
    assert back.norm_stats.to_dict() == stats.to_dict()
    assert back.extra == {"epochs": 12, "final_loss": 0.25}


def test_header_is_single_json_line(tmp_path):
    model = build_size_estimator("two_path", rng=Rng(45))
    path = tmp_path / "h.ckpt"
    save_checkpoint(model, path, seed=45)
    first = path.read_bytes().split(b"\n", 1)[0]
    header = json.loads(first)
    assert header["spec"] == {"family": "size", "arch": "two_path"}
    assert header["schema_version"] == 1


def test_schema_version_guard(tmp_path):
    model = build_size_estimator("mlp", rng=Rng(46))
    path = tmp_path / "v.ckpt"
    save_checkpoint(model, path, seed=46)
    head, payload = path.read_bytes().split(b"\n", 1)
    header = json.loads(head)
    header["schema_version"] = 99
    path.write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)
    with pytest.raises(SchemaMismatch, match="99"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    model = build_size_estimator("mlp", rng=Rng(47))
    path = tmp_path / "t.ckpt"
    save_checkpoint(model, path, seed=47)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(DataIOError, match="payload"):
        load_checkpoint(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(DataIOError, match="cannot read"):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_garbage_header_rejected(tmp_path):
    path = tmp_path / "g.ckpt"
    path.write_bytes(b"\x00\x01\x02\nrest")
    with pytest.raises(DataIOError):
        load_checkpoint(path)
