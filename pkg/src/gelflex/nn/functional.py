"""Stateless neural-net operations with hand-derived backward passes.

All image ops take NCHW arrays. conv2d computes cross-correlation (no kernel
flip), the convention every framework ships under the name "conv".
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _accumulate


def _check_finite(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} received non-finite input")


def _check_nchw(name: str, arr: np.ndarray):
    if arr.ndim != 4:
        raise ValueError(f"{name} expects NCHW input, got shape {arr.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x [N,C,H,W] with weight [F,C,kH,kW].

    Output spatial extent is floor((H + 2p - kH)/s) + 1 per axis.
    """
    _check_nchw("conv2d", x.data)
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d weight must be [F,C,kH,kW], got {weight.data.shape}")
    n, c, h, w = x.data.shape
    f, wc, kh, kw = weight.data.shape
    if wc != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {wc}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError(
            f"conv2d kernel ({kh}x{kw}) exceeds padded input ({h + 2 * padding}x{w + 2 * padding})"
        )

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # windows: [N, C, Ho', Wo', kH, kW] then stride-subsample the spatial axes
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_data = np.einsum("nchwij,fcij->nfhw", win, weight.data, optimize=True)
    out_data = np.ascontiguousarray(out_data, dtype=x.data.dtype)
    if bias is not None:
        out_data += bias.data.reshape(1, f, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor(out_data, any(p.requires_grad for p in parents), parents)
    ho, wo = out_data.shape[2], out_data.shape[3]

    def _bw():
        g = out.grad
        if weight.requires_grad:
            gw = np.einsum("nchwij,nfhw->fcij", win, g, optimize=True)
            _accumulate(weight, gw.astype(weight.data.dtype, copy=False))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)).astype(bias.data.dtype, copy=False))
        if x.requires_grad:
            gx_pad = np.zeros(
                (n, c, h + 2 * padding, w + 2 * padding), dtype=x.data.dtype
            )
            # scatter each kernel offset's contribution back onto the input
            for i in range(kh):
                for j in range(kw):
                    contrib = np.einsum("nfhw,fc->nchw", g, weight.data[:, :, i, j],
                                        optimize=True)
                    gx_pad[:, :, i:i + ho * stride:stride,
                           j:j + wo * stride:stride] += contrib
            if padding:
                gx_pad = gx_pad[:, :, padding:-padding, padding:-padding]
            _accumulate(x, gx_pad)

    out._backward = _bw
    return out


def maxpool2d(x: Tensor, kernel: int = 2, stride: int | None = None) -> Tensor:
    """Max over non-overlapping (by default) kernel x kernel windows.

    Ties go to the first element in row-major window order, and the gradient
    follows only that element.
    """
    _check_nchw("maxpool2d", x.data)
    if stride is None:
        stride = kernel
    n, c, h, w = x.data.shape
    if h < kernel or w < kernel:
        raise ValueError(f"maxpool2d kernel {kernel} exceeds input {h}x{w}")
    win = sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out = Tensor(np.ascontiguousarray(out_data), x.requires_grad, (x,))

    def _bw():
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        ii, jj = np.unravel_index(arg, (kernel, kernel))
        ni, ci, hi, wi = np.indices((n, c, ho, wo))
        rows = hi * stride + ii
        cols = wi * stride + jj
        np.add.at(gx, (ni, ci, rows, cols), out.grad)
        _accumulate(x, gx)

    out._backward = _bw
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x [N,F] @ weight [F,G] + bias [G]."""
    if x.data.ndim != 2:
        raise ValueError(f"linear expects [N,F] input, got shape {x.data.shape}")
    if weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch: input {x.data.shape} vs weight {weight.data.shape}"
        )
    out_data = x.data @ weight.data
    if bias is not None:
        out_data = out_data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor(out_data, any(p.requires_grad for p in parents), parents)

    def _bw():
        g = out.grad
        if x.requires_grad:
            _accumulate(x, g @ weight.data.T)
        if weight.requires_grad:
            _accumulate(weight, x.data.T @ g)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))

    out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    _check_finite("relu", x.data)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0), x.requires_grad, (x,))

    def _bw():
        _accumulate(x, out.grad * mask)

    out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    _check_finite("sigmoid", x.data)
    # evaluate on the negative half-line only so exp never overflows
    pos = x.data >= 0
    e = np.exp(np.where(pos, -x.data, x.data))
    s = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.data.dtype)
    # keep the open interval: saturated values round to exactly 0 or 1 and
    # would poison any log taken downstream
    fi = np.finfo(s.dtype)
    s = np.clip(s, fi.tiny, np.nextafter(s.dtype.type(1.0), s.dtype.type(0.0)))
    out = Tensor(s, x.requires_grad, (x,))

    def _bw():
        _accumulate(x, out.grad * s * (1.0 - s))

    out._backward = _bw
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite("softmax", x.data)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = (e / e.sum(axis=axis, keepdims=True)).astype(x.data.dtype)
    out = Tensor(p, x.requires_grad, (x,))

    def _bw():
        g = out.grad
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accumulate(x, p * (g - dot))

    out._backward = _bw
    return out


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1,
                eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with current-batch population statistics and
    updates the running buffers in place; a batch of one sample is rejected
    because its variance carries no information. Eval mode uses the buffers
    and leaves them untouched.
    """
    _check_nchw("batchnorm2d", x.data)
    n, c, h, w = x.data.shape
    if training:
        if n < 2:
            raise ValueError(
                "batchnorm2d in training mode needs a batch of at least 2 samples"
            )
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out_data = (xhat * gamma.data.reshape(1, c, 1, 1)
                + beta.data.reshape(1, c, 1, 1)).astype(x.data.dtype)
    out = Tensor(out_data, x.requires_grad or gamma.requires_grad or beta.requires_grad,
                 (x, gamma, beta))

    def _bw():
        g = out.grad
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(1, c, 1, 1)
            if training:
                m = n * h * w
                s1 = gxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv_std.reshape(1, c, 1, 1) / m) * (m * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv_std.reshape(1, c, 1, 1)
            _accumulate(x, gx.astype(x.data.dtype, copy=False))

    out._backward = _bw
    return out
