"""Reverse-mode autodiff Tensor and elementwise/structural operations.

A Tensor wraps a float32/float64 numpy array plus the closure that routes an
upstream gradient to its parents. Calling ``backward()`` on a scalar result
walks the recorded graph in reverse topological order. Tensors are
value-semantic: nothing here touches global state, so distinct graphs can run
on distinct threads.
"""

from __future__ import annotations

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)


class AutogradError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        """Backpropagate from a scalar result through the recorded graph."""
        if self.data.size != 1:
            raise AutogradError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        if self._backward is None and not self._parents and not self.requires_grad:
            raise AutogradError("backward() called on a tensor with no recorded graph")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            # nodes on constant-only paths never receive a gradient; their
            # closures must not run or they would read a None upstream grad
            if node._backward is not None and node.grad is not None:
                node._backward()

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self
        out = Tensor(self.data.reshape(shape), src.requires_grad, (src,))

        def _bw():
            _accumulate(src, out.grad.reshape(src.data.shape))

        out._backward = _bw
        return out

    def sum(self) -> "Tensor":
        src = self
        out = Tensor(np.asarray(self.data.sum(dtype=self.data.dtype)),
                     src.requires_grad, (src,))

        def _bw():
            _accumulate(src, np.full_like(src.data, out.grad))

        out._backward = _bw
        return out

    def mean(self) -> "Tensor":
        src = self
        out = Tensor(np.asarray(self.data.mean(dtype=self.data.dtype)),
                     src.requires_grad, (src,))

        def _bw():
            _accumulate(src, np.full_like(src.data, out.grad / src.data.size))

        out._backward = _bw
        return out

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.dtype}, grad={self.requires_grad})"


def _toposort(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(g.dtype, copy=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64)
                                                  if not isinstance(x, np.ndarray) else x)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw():
        _accumulate(a, _unbroadcast(out.grad, a.data.shape))
        _accumulate(b, _unbroadcast(out.grad, b.data.shape))

    out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw():
        _accumulate(a, _unbroadcast(out.grad, a.data.shape))
        _accumulate(b, _unbroadcast(-out.grad, b.data.shape))

    out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        out = Tensor(a.data * b, a.requires_grad, (a,))

        def _bw_scalar():
            _accumulate(a, out.grad * b)

        out._backward = _bw_scalar
        return out
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw():
        _accumulate(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul expects [N,F] @ [F,G], got {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw():
        _accumulate(a, out.grad @ b.data.T)
        _accumulate(b, a.data.T @ out.grad)

    out._backward = _bw
    return out


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=axis),
        any(p.requires_grad for p in parts),
        tuple(parts),
    )
    sizes = [p.data.shape[axis] for p in parts]

    def _bw():
        offsets = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, out.grad[tuple(idx)])

    out._backward = _bw
    return out
