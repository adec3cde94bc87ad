"""Finite-difference verification of analytic gradients.

The checker perturbs one coordinate at a time with central differences in
float64 and compares against the recorded backward pass. Coordinates sitting
on a non-differentiable kink (relu at zero, a maxpool tie) are detected by
re-estimating at half the step: if the two estimates disagree the coordinate
is skipped rather than allowed to produce a false alarm.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from . import functional as F
from .tensor import Tensor


def finite_difference_check(fn, tensors, rel_tol: float = 1e-4,
                            max_coords: int | None = None,
                            rng: Rng | None = None):
    """Compare analytic and numeric gradients of scalar-valued fn.

    fn takes the Tensor list and returns a scalar Tensor built from them.
    Returns (max_rel_err, n_checked). Raises AssertionError on mismatch.
    """
    for t in tensors:
        t.data = t.data.astype(np.float64)
        t.grad = None
    out = fn(tensors)
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    max_err = 0.0
    n_checked = 0
    for ti, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            if rng is None:
                raise ValueError("subsampled check needs an rng")
            coords = rng.permutation(n)[:max_coords]
        else:
            coords = np.arange(n)
        for ci in coords:
            orig = flat[ci]
            h = 1e-3 * max(1.0, abs(orig))

            def eval_at(value: float) -> float:
                flat[ci] = value
                return float(fn(tensors).data)

            def estimate(step: float):
                num = (eval_at(orig + step) - eval_at(orig - step)) / (2.0 * step)
                half = (eval_at(orig + step / 2) - eval_at(orig - step / 2)) / step
                return num, half

            num, num_half = estimate(h)
            flat[ci] = orig
            # a kink inside the stencil makes the two step sizes disagree
            scale = max(abs(num), abs(num_half), 1.0)
            if abs(num - num_half) / scale > 1e-3:
                continue
            a = analytic[ti].reshape(-1)[ci]
            err = abs(a - num) / max(abs(a), abs(num), 1e-6)
            if err > rel_tol:
                # a kink crossed symmetrically biases the estimate by the same
                # amount at every step size, so the halving guard cannot see
                # it; re-estimate well below the crossing distance, where a
                # true backward bug still disagrees but the artifact vanishes
                num, num_half = estimate(h / 64.0)
                flat[ci] = orig
                fine_scale = max(abs(num), abs(num_half), 1e-6)
                if abs(num - num_half) / fine_scale > 1e-3:
                    continue
                err = abs(a - num) / max(abs(a), abs(num), 1e-6)
            max_err = max(max_err, err)
            n_checked += 1
            if err > rel_tol:
                raise AssertionError(
                    f"gradient mismatch at tensor {ti} coord {ci}: "
                    f"analytic {a:.8g} vs numeric {num:.8g} (rel err {err:.3g})"
                )
    return max_err, n_checked


def _leaf(rng: Rng, shape, scale: float = 1.0) -> Tensor:
    t = Tensor(rng.normal(size=shape, std=scale).astype(np.float64),
               requires_grad=True)
    return t


def _away_from_zero(t: Tensor, margin: float = 0.05) -> Tensor:
    """Push values out of the dead zone so relu kinks cannot dominate."""
    d = t.data
    d = np.where(np.abs(d) < margin, np.sign(d + 1e-12) * margin * 2, d)
    t.data = d
    return t


def _check_conv(rng: Rng):
    x = _leaf(rng.spawn("x"), (2, 3, 6, 6))
    w = _leaf(rng.spawn("w"), (4, 3, 3, 3), 0.5)
    b = _leaf(rng.spawn("b"), (4,), 0.1)

    def fn(ts):
        return F.conv2d(ts[0], ts[1], ts[2], stride=2, padding=1).sum()

    return finite_difference_check(fn, [x, w, b])


def _check_linear(rng: Rng):
    x = _leaf(rng.spawn("x"), (3, 5))
    w = _leaf(rng.spawn("w"), (5, 4), 0.5)
    b = _leaf(rng.spawn("b"), (4,), 0.1)

    def fn(ts):
        return F.linear(ts[0], ts[1], ts[2]).sum()

    return finite_difference_check(fn, [x, w, b])


def _check_relu(rng: Rng):
    x = _away_from_zero(_leaf(rng.spawn("x"), (4, 6)))

    def fn(ts):
        return (F.relu(ts[0]) * F.relu(ts[0])).sum()

    return finite_difference_check(fn, [x])


def _check_sigmoid(rng: Rng):
    x = _leaf(rng.spawn("x"), (4, 6), 2.0)

    def fn(ts):
        return (F.sigmoid(ts[0]) * F.sigmoid(ts[0])).sum()

    return finite_difference_check(fn, [x])


def _check_softmax(rng: Rng):
    x = _leaf(rng.spawn("x"), (4, 5), 2.0)
    pick = rng.spawn("w").normal(size=(4, 5))

    def fn(ts):
        return (F.softmax(ts[0]) * Tensor(pick)).sum()

    return finite_difference_check(fn, [x])


def _check_maxpool(rng: Rng):
    # draw until every pooling window has comfortably distinct values,
    # otherwise the finite step can flip the argmax
    r = rng.spawn("x")
    for _ in range(64):
        x = r.normal(size=(2, 2, 4, 4))
        win = x.reshape(2, 2, 2, 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(2, 2, 4, 4)
        ok = True
        for idx in np.ndindex(2, 2, 2, 2):
            w = x[idx[0], idx[1], idx[2] * 2:idx[2] * 2 + 2, idx[3] * 2:idx[3] * 2 + 2]
            vals = np.sort(w.reshape(-1))
            if np.min(np.diff(vals)) < 0.05:
                ok = False
                break
        if ok:
            break
    t = Tensor(x, requires_grad=True)
    weights = rng.spawn("w").normal(size=(2, 2, 2, 2))

    def fn(ts):
        return (F.maxpool2d(ts[0], 2) * Tensor(weights)).sum()

    return finite_difference_check(fn, [t])


def _check_batchnorm(rng: Rng):
    x = _leaf(rng.spawn("x"), (4, 3, 3, 3))
    gamma = Tensor(1.0 + 0.1 * rng.spawn("g").normal(size=(3,)), requires_grad=True)
    beta = Tensor(0.1 * rng.spawn("b").normal(size=(3,)), requires_grad=True)
    weights = rng.spawn("w").normal(size=(4, 3, 3, 3))

    def fn(ts):
        rm = np.zeros(3)
        rv = np.ones(3)
        y = F.batchnorm2d(ts[0], ts[1], ts[2], rm, rv, training=True)
        return (y * Tensor(weights)).sum()

    return finite_difference_check(fn, [x, gamma, beta])


LAYER_KINDS = {
    "conv2d": _check_conv,
    "linear": _check_linear,
    "relu": _check_relu,
    "sigmoid": _check_sigmoid,
    "softmax": _check_softmax,
    "maxpool2d": _check_maxpool,
    "batchnorm2d": _check_batchnorm,
}


def grad_check(kind: str, rng: Rng):
    """Run the finite-difference check for one layer kind.

    Returns (max_rel_err, n_checked); raises AssertionError on failure.
    """
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}, have {sorted(LAYER_KINDS)}")
    return LAYER_KINDS[kind](rng)
