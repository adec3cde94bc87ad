"""Adam optimizer."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged


class Adam:
    """Adam with bias-corrected first and second moments.

    Moments are kept in float64 regardless of parameter dtype so repeated
    tiny updates do not stall in float32 rounding.
    """

    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self._items = list(named_params)
        if not self._items:
            raise ValueError("Adam got no parameters")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros(p.data.shape, dtype=np.float64) for _, p in self._items]
        self._v = [np.zeros(p.data.shape, dtype=np.float64) for _, p in self._items]

    def zero_grad(self):
        for _, p in self._items:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for (name, p), m, v in zip(self._items, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64, copy=False)
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in parameter {name!r}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype)
