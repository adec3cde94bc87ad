"""Architecture contracts: shapes, parameter audits, and full-model gradients."""

import numpy as np
import pytest

from gelflex.errors import ConfigError
from gelflex.models import (
    MlpSizeEstimator,
    build_model,
    build_proprio_cnn,
    build_size_estimator,
    build_tactile_lenet,
)
from gelflex.nn import (
    Conv2d,
    Incorporator,
    Linear,
    Tensor,
    finite_difference_check,
    incorporate,
    modulate,
    mse_loss,
)
from gelflex.rng import Rng


def _collect_module_types(module):
    found = [type(module).__name__]
    for child in module._modules.values():
        found.extend(_collect_module_types(child))
    return found


def _count_layers(module, cls):
    total = int(isinstance(module, cls))
    for child in module._modules.values():
        total += _count_layers(child, cls)
    return total


def test_proprio_output_shape_and_open_interval():
    model = build_proprio_cnn(1, 64, rng=Rng(0))
    x = Tensor(Rng(1).uniform(size=(3, 1, 64, 64)).astype(np.float32))
    out = model(x)
    assert out.shape == (3, 6)
    assert np.all(out.data > 0.0) and np.all(out.data < 1.0)


def test_second_camera_widens_only_first_conv():
    single = build_proprio_cnn(1, 64, rng=Rng(2))
    double = build_proprio_cnn(2, 64, rng=Rng(2))
    # one extra input channel times a 3x3 kernel times the first conv's
    # filter count is the entire difference
    expected = 1 * 3 * 3 * 16
    assert double.num_parameters() - single.num_parameters() == expected
    names_s = {n: p.shape for n, p in single.named_parameters()}
    names_d = {n: p.shape for n, p in double.named_parameters()}
    assert set(names_s) == set(names_d)
    changed = [n for n in names_s if names_s[n] != names_d[n]]
    assert changed == ["backbone.layer0.weight"]


def test_proprio_rejects_bad_inputs():
    with pytest.raises(ConfigError, match="cameras"):
        build_proprio_cnn(3, 64, rng=Rng(0))
    with pytest.raises(ConfigError, match="image size"):
        build_proprio_cnn(1, 8, rng=Rng(0))


def test_tactile_lenet_is_two_conv_two_fc():
    model = build_tactile_lenet(rng=Rng(3))
    assert _count_layers(model, Conv2d) == 2
    assert _count_layers(model, Linear) == 2
    x = Tensor(Rng(4).uniform(size=(5, 1, 32, 32)).astype(np.float32))
    out = model(x)
    assert out.shape == (5, 2)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


def test_tactile_lenet_window_too_small():
    with pytest.raises(ConfigError, match="too small"):
        build_tactile_lenet(window=10, rng=Rng(0))


def test_size_estimators_share_interface():
    angles = Tensor(Rng(5).uniform(size=(6, 6), lo=0.0, hi=120.0).astype(np.float32))
    shape = Tensor(np.eye(2, dtype=np.float32)[[0, 1, 1, 0, 0, 1]])
    for arch in ("mlp", "two_path", "incorporator"):
        model = build_size_estimator(arch, rng=Rng(6))
        out = model(angles, shape)
        assert out.shape == (6, 4)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)
        assert model.spec == {"family": "size", "arch": arch}


def test_unknown_size_arch_rejected():
    with pytest.raises(ConfigError, match="unknown size-estimator"):
        build_size_estimator("transformer", rng=Rng(0))
    with pytest.raises(ConfigError, match="unknown model family"):
        build_model({"family": "diffusion"}, rng=Rng(0))


def test_same_seed_rebuilds_identical_weights():
    for spec in ({"family": "proprio", "cameras": 1, "image_size": 64},
                 {"family": "tactile", "window": 32},
                 {"family": "size", "arch": "incorporator"}):
        a = build_model(spec, rng=Rng(7))
        b = build_model(spec, rng=Rng(7))
        c = build_model(spec, rng=Rng(8))
        pa, pb = dict(a.named_parameters()), dict(b.named_parameters())
        assert all(np.array_equal(pa[n].data, pb[n].data) for n in pa)
        pc = dict(c.named_parameters())
        assert any(not np.array_equal(pa[n].data, pc[n].data) for n in pa)


def test_modulate_zeroed_correction_is_bit_exact():
    f = Rng(9).normal(size=(4, 8)).astype(np.float32)
    out = modulate(f, np.zeros_like(f), np.zeros_like(f))
    assert out.tobytes() == f.tobytes()
    ft = Tensor(f)
    out_t = modulate(ft, Tensor(np.zeros_like(f)), Tensor(np.zeros_like(f)))
    assert out_t.data.tobytes() == f.tobytes()


def test_modulate_zero_features_returns_beta():
    beta = Rng(10).normal(size=(3, 5)).astype(np.float32)
    gamma = Rng(11).normal(size=(3, 5)).astype(np.float32)
    out = modulate(np.zeros_like(beta), gamma, beta)
    np.testing.assert_array_equal(out, beta)


def test_incorporate_zeroed_maps_return_features_bit_exactly():
    params = Incorporator(8, 2, rng=Rng(9))
    f = Tensor(Rng(10).normal(size=(4, 8)).astype(np.float32))
    out = incorporate(f, np.array([0, 1, 0, 1]), params)
    assert out.data.tobytes() == f.data.tobytes()


def test_incorporate_label_validation():
    params = Incorporator(8, 2, rng=Rng(11))
    f = Tensor(Rng(12).normal(size=(3, 8)).astype(np.float32))
    with pytest.raises(ValueError, match="out of range"):
        incorporate(f, np.array([0, 2, 1]), params)
    with pytest.raises(ValueError, match="integer class ids"):
        incorporate(f, np.array([0.5, 1.0, 0.0]), params)
    with pytest.raises(ValueError, match="labels for"):
        incorporate(f, np.array([0, 1]), params)
    single = incorporate(f, 1, params)
    assert single.shape == (3, 8)


def test_incorporate_jacobian_is_diag_one_plus_gamma():
    params = Incorporator(5, 2, rng=Rng(12))
    rng = Rng(13)
    params.gamma_map.weight.data[:] = rng.normal(size=(5, 5), std=0.5).astype(np.float32)
    params.beta_map.weight.data[:] = rng.normal(size=(5, 5), std=0.5).astype(np.float32)
    f = rng.normal(size=(1, 5)).astype(np.float64)
    label = np.array([1])
    embedding = (params.embed.weight.data[1].astype(np.float64)
                 + params.embed.bias.data.astype(np.float64))
    gamma = embedding @ params.gamma_map.weight.data.astype(np.float64)
    h = 1e-5
    jac = np.zeros((5, 5))
    for j in range(5):
        fp, fm = f.copy(), f.copy()
        fp[0, j] += h
        fm[0, j] -= h
        diff = (incorporate(Tensor(fp), label, params).data
                - incorporate(Tensor(fm), label, params).data)
        jac[:, j] = diff[0] / (2 * h)
    expected = np.diag(1.0 + gamma)
    np.testing.assert_allclose(jac, expected, atol=1e-4)


def test_fresh_incorporator_model_equals_angle_only_path():
    model = build_size_estimator("incorporator", rng=Rng(13))
    angles = Tensor(Rng(14).uniform(size=(2, 6), lo=0.0, hi=120.0).astype(np.float32))
    box = Tensor(np.array([[1.0, 0.0], [1.0, 0.0]], dtype=np.float32))
    cyl = Tensor(np.array([[0.0, 1.0], [0.0, 1.0]], dtype=np.float32))
    # the correction maps start at zero, so the untrained model is exactly
    # the angle-only network and the shape input cannot move its output
    angle_only = model.head(model.angle_path(angles * (1.0 / 120.0)))
    np.testing.assert_array_equal(model(angles, box).data, angle_only.data)
    np.testing.assert_array_equal(model(angles, cyl).data, angle_only.data)
    # once the beta map moves off zero it forwards the class embedding,
    # which differs per label, so the label starts to matter
    hidden = model.modulator.beta_map.weight.data.shape[0]
    model.modulator.beta_map.weight.data[:] = np.eye(hidden, dtype=np.float32) * 0.5
    assert not np.array_equal(model(angles, box).data, model(angles, cyl).data)


def _model_grad_check(model, inputs, target, seed):
    tensors = [p for _, p in model.named_parameters()]
    tensors += [t for t in inputs if t.requires_grad]

    def fn(_):
        return mse_loss(model(*inputs), target)

    err, checked = finite_difference_check(
        fn, tensors, rel_tol=1e-4, max_coords=8, rng=Rng(900 + seed))
    assert checked > 50
    return err


def test_proprio_full_model_gradients():
    model = build_proprio_cnn(1, 16, rng=Rng(20))
    model.train()
    x = Tensor(Rng(21).uniform(size=(2, 1, 16, 16)), requires_grad=True)
    target = Rng(22).uniform(size=(2, 6), lo=0.2, hi=0.8)
    err = _model_grad_check(model, (x,), target, 0)
    assert err < 1e-4


def test_tactile_full_model_gradients():
    model = build_tactile_lenet(window=20, rng=Rng(23))
    x = Tensor(Rng(24).uniform(size=(2, 1, 20, 20)), requires_grad=True)
    target = np.array([[1.0, 0.0], [0.0, 1.0]])
    err = _model_grad_check(model, (x,), target, 1)
    assert err < 1e-4


@pytest.mark.parametrize("arch", ["mlp", "two_path", "incorporator"])
def test_size_full_model_gradients(arch):
    model = build_size_estimator(arch, rng=Rng(25))
    angles = Tensor(Rng(26).uniform(size=(3, 6), lo=10.0, hi=110.0),
                    requires_grad=True)
    shape = Tensor(np.eye(2)[[0, 1, 0]].astype(np.float64))
    target = np.eye(4)[[0, 2, 3]]
    err = _model_grad_check(model, (angles, shape), target, 2)
    assert err < 1e-4


def test_mlp_consumes_concatenated_eight_dims():
    model = MlpSizeEstimator(rng=Rng(27))
    first = model.trunk.layer0
    assert first.weight.shape[0] == 8
