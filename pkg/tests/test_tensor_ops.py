"""Forward-pass correctness of the network ops against brute-force oracles."""

import numpy as np
import pytest

from gelflex import nn
from gelflex.rng import Rng
from gelflex.nn.tensor import Tensor


def conv2d_oracle(x, w, b, stride, padding):
    """Direct cross-correlation with explicit loops over every index."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for ni in range(n):
        for fi in range(f):
            for oi in range(ho):
                for oj in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[ni, ci, oi * stride + i, oj * stride + j] \
                                    * w[fi, ci, i, j]
                    out[ni, fi, oi, oj] = acc + (0.0 if b is None else b[fi])
    return out


def maxpool_oracle(x, kernel, stride):
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for ni in range(n):
        for ci in range(c):
            for oi in range(ho):
                for oj in range(wo):
                    best = -np.inf
                    for i in range(kernel):
                        for j in range(kernel):
                            best = max(best, x[ni, ci, oi * stride + i, oj * stride + j])
                    out[ni, ci, oi, oj] = best
    return out


def test_conv_identity_kernel():
    x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    w = np.ones((1, 1, 1, 1))
    out = nn.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv_matches_loop_oracle_small():
    rng = Rng(11)
    x = rng.normal(size=(1, 1, 5, 5))
    w = rng.spawn("w").normal(size=(1, 1, 3, 3))
    out = nn.conv2d(Tensor(x), Tensor(w))
    ref = conv2d_oracle(x, w, None, 1, 0)
    np.testing.assert_allclose(out.data, ref, atol=1e-5)


def test_conv_matches_loop_oracle_shape_sweep():
    # every admissible configuration with extents up to 8
    rng = Rng(12)
    cases = 0
    for h in (3, 5, 8):
        for kh in (1, 2, 3):
            for stride in (1, 2):
                for padding in (0, 1):
                    if h + 2 * padding < kh:
                        continue
                    r = rng.spawn(f"{h}.{kh}.{stride}.{padding}")
                    x = r.spawn("x").normal(size=(2, 3, h, h))
                    w = r.spawn("w").normal(size=(4, 3, kh, kh))
                    b = r.spawn("b").normal(size=(4,))
                    out = nn.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding)
                    ref = conv2d_oracle(x, w, b, stride, padding)
                    assert out.data.shape == ref.shape
                    np.testing.assert_allclose(out.data, ref, atol=1e-5)
                    cases += 1
    assert cases >= 30


def test_conv_accepts_doubled_input_channels():
    rng = Rng(13)
    x = rng.normal(size=(2, 2, 8, 8))
    w = rng.spawn("w").normal(size=(16, 2, 3, 3))
    out = nn.conv2d(Tensor(x), Tensor(w), stride=2, padding=1)
    assert out.data.shape == (2, 16, 4, 4)


def test_conv_shape_errors():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    with pytest.raises(ValueError, match="channel mismatch"):
        nn.conv2d(x, Tensor(np.zeros((2, 5, 3, 3))))
    with pytest.raises(ValueError, match="exceeds"):
        nn.conv2d(x, Tensor(np.zeros((2, 3, 6, 6))))
    with pytest.raises(ValueError, match="NCHW"):
        nn.conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 3, 3, 3))))


def test_batchnorm_standardizes_in_train_mode():
    rng = Rng(14)
    x = Tensor(rng.normal(size=(8, 3, 5, 5), mean=2.0, std=3.0))
    bn = nn.BatchNorm2d(3)
    out = bn(x)
    for c in range(3):
        ch = out.data[:, c]
        assert abs(ch.mean()) < 1e-5
        assert abs(ch.var() - 1.0) < 1e-3


def test_batchnorm_constant_channel_gives_beta():
    x = Tensor(np.full((4, 2, 3, 3), 7.0))
    bn = nn.BatchNorm2d(2)
    bn.beta.data[:] = [1.5, -2.0]
    out = bn(x)
    np.testing.assert_allclose(out.data[:, 0], 1.5, atol=1e-4)
    np.testing.assert_allclose(out.data[:, 1], -2.0, atol=1e-4)


def test_batchnorm_eval_matches_hand_formula():
    rng = Rng(15)
    bn = nn.BatchNorm2d(2)
    bn.gamma.data[:] = [1.3, 0.7]
    bn.beta.data[:] = [0.2, -0.4]
    # accumulate running stats over a few training batches, then freeze
    for i in range(5):
        bn(Tensor(rng.spawn(f"b{i}").normal(size=(6, 2, 4, 4), mean=1.0)))
    bn.eval()
    x = rng.spawn("eval").normal(size=(3, 2, 4, 4))
    out = bn(Tensor(x))
    mu, var = bn.running_mean, bn.running_var
    ref = np.empty_like(x)
    for c in range(2):
        ref[:, c] = (x[:, c] - mu[c]) / np.sqrt(var[c] + 1e-5) * bn.gamma.data[c] \
            + bn.beta.data[c]
    np.testing.assert_allclose(out.data, ref, atol=1e-5)


def test_batchnorm_eval_does_not_touch_running_stats():
    rng = Rng(16)
    bn = nn.BatchNorm2d(3)
    bn(Tensor(rng.normal(size=(4, 3, 4, 4))))
    frozen_mean = bn.running_mean.copy()
    frozen_var = bn.running_var.copy()
    bn.eval()
    bn(Tensor(rng.spawn("e").normal(size=(4, 3, 4, 4))))
    np.testing.assert_array_equal(bn.running_mean, frozen_mean)
    np.testing.assert_array_equal(bn.running_var, frozen_var)


def test_batchnorm_rejects_batch_of_one_in_train_mode():
    bn = nn.BatchNorm2d(2)
    with pytest.raises(ValueError, match="at least 2"):
        bn(Tensor(np.zeros((1, 2, 4, 4))))


def test_activation_point_values():
    assert nn.sigmoid(Tensor(np.array([0.0]))).data[0] == pytest.approx(0.5)
    np.testing.assert_array_equal(
        nn.relu(Tensor(np.array([-2.5, 3.0]))).data, [0.0, 3.0])
    np.testing.assert_allclose(
        nn.softmax(Tensor(np.zeros((1, 4)))).data, [[0.25, 0.25, 0.25, 0.25]])


def test_activation_ranges():
    rng = Rng(17)
    x = Tensor(rng.normal(size=(16, 10), std=20.0))
    s = nn.sigmoid(x).data
    assert np.all(s > 0.0) and np.all(s < 1.0)
    p = nn.softmax(x).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_activation_rejects_nan():
    bad = Tensor(np.array([1.0, np.nan]))
    for op in (nn.relu, nn.sigmoid):
        with pytest.raises(ValueError, match="non-finite"):
            op(bad)
    with pytest.raises(ValueError, match="non-finite"):
        nn.softmax(Tensor(np.array([[1.0, np.inf]])))


def test_sigmoid_extreme_inputs_stay_finite():
    x = Tensor(np.array([-800.0, 800.0]))
    s = nn.sigmoid(x).data
    assert np.all(np.isfinite(s))
    assert s[0] == pytest.approx(0.0, abs=1e-12)
    assert s[1] == pytest.approx(1.0, abs=1e-12)


def test_maxpool_single_window():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    assert nn.maxpool2d(x, 2).data.reshape(()) == 4.0


def test_maxpool_constant_image():
    x = Tensor(np.full((1, 1, 6, 6), 1.25))
    np.testing.assert_array_equal(nn.maxpool2d(x, 2).data, np.full((1, 1, 3, 3), 1.25))


def test_maxpool_matches_loop_oracle():
    rng = Rng(18)
    x = rng.normal(size=(1, 1, 6, 6))
    out = nn.maxpool2d(Tensor(x), 2, 2)
    np.testing.assert_allclose(out.data, maxpool_oracle(x, 2, 2))


def test_maxpool_overlapping_stride_matches_oracle():
    rng = Rng(19)
    x = rng.normal(size=(2, 3, 7, 7))
    out = nn.maxpool2d(Tensor(x), 3, 2)
    np.testing.assert_allclose(out.data, maxpool_oracle(x, 3, 2))


def test_maxpool_kernel_too_large():
    with pytest.raises(ValueError, match="exceeds"):
        nn.maxpool2d(Tensor(np.zeros((1, 1, 3, 3))), 4)


def test_linear_identity():
    x = np.arange(6, dtype=np.float64).reshape(2, 3)
    out = nn.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x)


def test_linear_hand_case():
    out = nn.linear(Tensor(np.array([[1.0, 1.0]])),
                    Tensor(np.array([[2.0], [3.0]])),
                    Tensor(np.array([1.0])))
    np.testing.assert_array_equal(out.data, [[6.0]])


def test_linear_matches_scalar_loop_oracle():
    rng = Rng(20)
    x = rng.spawn("x").normal(size=(4, 7))
    w = rng.spawn("w").normal(size=(7, 3))
    b = rng.spawn("b").normal(size=(3,))
    out = nn.linear(Tensor(x), Tensor(w), Tensor(b))
    ref = np.zeros((4, 3))
    for ni in range(4):
        for gi in range(3):
            acc = b[gi]
            for fi in range(7):
                acc += x[ni, fi] * w[fi, gi]
            ref[ni, gi] = acc
    np.testing.assert_allclose(out.data, ref, atol=1e-6)


def test_linear_shape_errors():
    with pytest.raises(ValueError, match="mismatch"):
        nn.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ValueError, match=r"\[N,F\]"):
        nn.linear(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))


def test_mse_of_identical_tensors_is_zero():
    rng = Rng(21)
    x = rng.normal(size=(5, 3))
    assert nn.mse_loss(Tensor(x), x).data == 0.0


def test_cross_entropy_uniform_is_log4():
    p = Tensor(np.full((6, 4), 0.25))
    labels = np.array([0, 1, 2, 3, 0, 2])
    assert float(nn.cross_entropy(p, labels).data) == pytest.approx(np.log(4), abs=1e-6)


def test_losses_match_scalar_loop_oracle():
    rng = Rng(22)
    pred = rng.spawn("p").normal(size=(5, 3))
    target = rng.spawn("t").normal(size=(5, 3))
    acc = 0.0
    for i in range(5):
        for j in range(3):
            acc += (pred[i, j] - target[i, j]) ** 2
    ref_mse = acc / 15.0
    assert float(nn.mse_loss(Tensor(pred), target).data) == pytest.approx(ref_mse, rel=1e-6)

    logits = rng.spawn("l").normal(size=(5, 4))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = rng.spawn("y").integers(4, size=5)
    ref_ce = 0.0
    for i in range(5):
        ref_ce -= np.log(probs[i, labels[i]] + 1e-12)
    ref_ce /= 5.0
    assert float(nn.cross_entropy(Tensor(probs), labels).data) == pytest.approx(ref_ce, rel=1e-6)


def test_cross_entropy_rejects_non_probabilities():
    with pytest.raises(ValueError, match="probabilities"):
        nn.cross_entropy(Tensor(np.array([[3.0, -1.0]])), np.array([0]))
    with pytest.raises(ValueError, match="probabilities"):
        nn.cross_entropy(Tensor(np.array([[0.9, 0.9]])), np.array([0]))


def test_cross_entropy_accepts_one_hot():
    p = Tensor(np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]]))
    one_hot = np.array([[1, 0, 0], [0, 1, 0]])
    a = float(nn.cross_entropy(p, one_hot).data)
    b = float(nn.cross_entropy(p, np.array([0, 1])).data)
    assert a == pytest.approx(b)


def test_loss_dispatcher():
    x = np.ones((2, 2))
    assert nn.loss("mse", Tensor(x), x).data == 0.0
    with pytest.raises(ValueError, match="unknown loss"):
        nn.loss("huber", Tensor(x), x)


def test_concat_forward_and_shapes():
    a = np.ones((2, 3))
    b = np.zeros((2, 2))
    out = nn.concat([Tensor(a), Tensor(b)], axis=1)
    assert out.data.shape == (2, 5)
    np.testing.assert_array_equal(out.data[:, :3], a)
    np.testing.assert_array_equal(out.data[:, 3:], b)


def test_tensor_casts_integers_to_float():
    t = Tensor(np.array([1, 2, 3]))
    assert t.dtype == np.float32


def test_sequential_and_flatten_shapes():
    rng = Rng(23)
    model = nn.Sequential(
        nn.Conv2d(1, 4, 3, stride=2, padding=1, rng=rng.spawn("c")),
        nn.ReLU(),
        nn.Flatten(),
        nn.Linear(4 * 4 * 4, 5, rng=rng.spawn("l")),
        nn.Softmax(),
    )
    x = Tensor(rng.spawn("x").normal(size=(2, 1, 8, 8)).astype(np.float32))
    out = model(x)
    assert out.data.shape == (2, 5)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


def test_module_parameter_registry_is_declaration_ordered():
    rng = Rng(24)
    model = nn.Sequential(
        nn.Conv2d(1, 2, 3, rng=rng.spawn("c")),
        nn.BatchNorm2d(2),
        nn.Linear(4, 3, rng=rng.spawn("l")),
    )
    names = [n for n, _ in model.named_parameters()]
    assert names == [
        "layer0.weight", "layer0.bias",
        "layer1.gamma", "layer1.beta",
        "layer2.weight", "layer2.bias",
    ]
    buffers = [n for n, _ in model.named_buffers()]
    assert buffers == ["layer1.running_mean", "layer1.running_var"]


def test_module_train_eval_propagates():
    rng = Rng(25)
    model = nn.Sequential(nn.Conv2d(1, 2, 3, rng=rng), nn.BatchNorm2d(2))
    assert model.layers[1].training
    model.eval()
    assert not model.layers[1].training
    model.train()
    assert model.layers[1].training
