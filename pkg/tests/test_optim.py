"""Adam optimizer behavior against a scalar reference implementation."""

import numpy as np
import pytest

from gelflex import nn
from gelflex.errors import TrainingDiverged
from gelflex.nn.tensor import Tensor


def adam_reference(w0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam on a single scalar, written independently of the package."""
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        w -= lr * mhat / (np.sqrt(vhat) + eps)
    return w


def _param(value):
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def test_zero_gradient_leaves_parameters_unchanged():
    p = _param([1.0, -2.0])
    opt = nn.Adam([("p", p)], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_missing_gradient_is_skipped():
    p = _param([3.0])
    opt = nn.Adam([("p", p)], lr=0.1)
    p.grad = None
    opt.step()
    np.testing.assert_array_equal(p.data, [3.0])


def test_first_step_magnitude_is_lr():
    p = _param([5.0, -5.0, 0.5])
    opt = nn.Adam([("p", p)], lr=0.01)
    p.grad = np.array([3.0, -0.2, 1e-3])
    before = p.data.copy()
    opt.step()
    step = p.data - before
    # bias-corrected first step moves each coordinate by lr against the sign
    np.testing.assert_allclose(np.abs(step), 0.01, rtol=1e-4)
    np.testing.assert_array_equal(np.sign(step), [-1.0, 1.0, -1.0])


def test_quadratic_converges_to_minimum():
    p = _param(0.0)
    opt = nn.Adam([("w", p)], lr=0.1)
    for _ in range(100):
        opt.zero_grad()
        w = float(p.data)
        p.grad = np.array(2.0 * (w - 3.0))
        opt.step()
    assert abs(float(p.data) - 3.0) < 0.1


def test_quadratic_trajectory_matches_scalar_reference():
    p = _param(0.0)
    opt = nn.Adam([("w", p)], lr=0.1)
    for _ in range(100):
        p.grad = np.array(2.0 * (float(p.data) - 3.0))
        opt.step()
    ref = adam_reference(0.0, lambda w: 2.0 * (w - 3.0), lr=0.1, steps=100)
    assert float(p.data) == pytest.approx(ref, abs=1e-10)


def test_lr_zero_is_a_no_op():
    rng_vals = np.linspace(-4, 7, 6)
    p = _param(rng_vals)
    opt = nn.Adam([("p", p)], lr=0.0)
    for i in range(5):
        p.grad = np.sin(rng_vals * (i + 1)) * 100
        opt.step()
    np.testing.assert_array_equal(p.data, rng_vals)


def test_non_finite_gradient_names_parameter():
    p = _param([1.0])
    opt = nn.Adam([("encoder.weight", p)], lr=0.1)
    p.grad = np.array([np.nan])
    with pytest.raises(TrainingDiverged, match="encoder.weight"):
        opt.step()


def test_adam_trains_through_autograd_graph():
    # end to end: minimize mse between a linear map and a fixed target
    from gelflex.rng import Rng
    rng = Rng(40)
    lin = nn.Linear(3, 2, rng=rng.spawn("l"))
    x = rng.spawn("x").normal(size=(8, 3)).astype(np.float32)
    w_true = rng.spawn("w").normal(size=(3, 2))
    target = (x @ w_true + np.array([0.5, -1.0])).astype(np.float32)
    opt = nn.Adam(lin.named_parameters(), lr=0.05)
    first = None
    for _ in range(200):
        opt.zero_grad()
        loss = nn.mse_loss(lin(Tensor(x)), target)
        if first is None:
            first = float(loss.data)
        loss.backward()
        opt.step()
    final = float(nn.mse_loss(lin(Tensor(x)), target).data)
    assert final < 0.01 * first


def test_adam_rejects_empty_parameter_list():
    with pytest.raises(ValueError, match="no parameters"):
        nn.Adam([])
