"""Scalar training losses."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _accumulate


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over every element."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.data.shape:
        raise ValueError(
            f"mse_loss shape mismatch: pred {pred.data.shape} vs target {target.shape}"
        )
    diff = pred.data - target
    out = Tensor(np.asarray((diff * diff).mean(dtype=pred.data.dtype)),
                 pred.requires_grad, (pred,))

    def _bw():
        _accumulate(pred, out.grad * 2.0 * diff / diff.size)

    out._backward = _bw
    return out


def cross_entropy(probs: Tensor, labels: np.ndarray, eps: float = 1e-12) -> Tensor:
    """Mean negative log-likelihood of integer labels under probs [N,K].

    Expects a probability simplex per row (as softmax emits), not logits, and
    validates that so a miswired head fails loudly instead of training on
    garbage.
    """
    if probs.data.ndim != 2:
        raise ValueError(f"cross_entropy expects [N,K] probabilities, got {probs.data.shape}")
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != probs.data.shape or not np.all(np.isin(labels, (0, 1))) \
                or not np.all(labels.sum(axis=1) == 1):
            raise ValueError(
                f"cross_entropy 2-d targets must be one-hot rows of shape {probs.data.shape}"
            )
        labels = labels.argmax(axis=1)
    if labels.ndim != 1 or labels.shape[0] != probs.data.shape[0]:
        raise ValueError(
            f"cross_entropy labels must be [N], got {labels.shape} for probs {probs.data.shape}"
        )
    n, k = probs.data.shape
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"cross_entropy labels out of range [0, {k})")
    row_sums = probs.data.sum(axis=1)
    if np.any(probs.data < -1e-6) or np.any(np.abs(row_sums - 1.0) > 1e-4):
        raise ValueError("cross_entropy expects probabilities summing to 1 per row")

    picked = probs.data[np.arange(n), labels]
    out = Tensor(np.asarray(-np.log(picked + eps).mean(), dtype=probs.data.dtype),
                 probs.requires_grad, (probs,))

    def _bw():
        g = np.zeros_like(probs.data)
        g[np.arange(n), labels] = -1.0 / (picked + eps) / n
        _accumulate(probs, out.grad * g)

    out._backward = _bw
    return out


def loss(kind: str, pred: Tensor, target: np.ndarray) -> Tensor:
    """Dispatch by task: "mse" for regression, "cross_entropy" for classes."""
    if kind == "mse":
        return mse_loss(pred, target)
    if kind == "cross_entropy":
        return cross_entropy(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")
