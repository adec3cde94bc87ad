"""Counter-based deterministic random number generator.

The generator is a vectorized splitmix64: output ``i`` of a stream with seed
``s`` is ``mix64(s + (i+1)*GOLDEN)``, so the raw 64-bit stream is a pure
function of (seed, index) and is reproducible across platforms and processes.
The platform RNGs (``random``, ``np.random``) are never used anywhere in the
package.

Floating-point derivations: uniforms are exact IEEE operations on the raw
bits and therefore bit-portable; normals go through Box-Muller (``log``,
``cos``) and are reproducible for a given libm.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _fold_tag(key: int, tag) -> int:
    """Fold a string/int tag into a 64-bit key, avalanche-mixed."""
    if isinstance(tag, str):
        acc = 0xCBF29CE484222325  # FNV-1a over utf-8 bytes
        for b in tag.encode("utf-8"):
            acc = ((acc ^ b) * 0x100000001B3) & _MASK64
        tag = acc
    elif not isinstance(tag, (int, np.integer)):
        raise TypeError(f"rng tags must be str or int, got {type(tag).__name__}")
    z = (key ^ (int(tag) & _MASK64)) + 0x9E3779B97F4A7C15
    return int(_mix64(np.uint64(z & _MASK64)))


class Rng:
    """Deterministic stream of random values owned by exactly one consumer.

    Identical seeds give identical streams; ``spawn`` derives statistically
    independent child streams without consuming from the parent.
    """

    def __init__(self, seed: int):
        self._key = np.uint64(int(seed) & _MASK64)
        self._counter = 0

    @property
    def seed(self) -> int:
        return int(self._key)

    def spawn(self, *tags) -> "Rng":
        """Child generator keyed by (seed, *tags); parent state untouched."""
        key = int(self._key)
        if not tags:
            tags = ("spawn",)
        for tag in tags:
            key = _fold_tag(key, tag)
        return Rng(key)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 outputs."""
        if n < 0:
            raise ValueError("n must be non-negative")
        start = self._counter + 1
        self._counter += n
        with np.errstate(over="ignore"):
            idx = np.arange(start, start + n, dtype=np.uint64)
            return _mix64(self._key + idx * _GOLDEN)

    def uniform(self, size=None, lo: float = 0.0, hi: float = 1.0):
        """Uniform floats in [lo, hi); 53-bit mantissas, exactly portable."""
        shape, n = _normalize_size(size)
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        out = lo + u * (hi - lo)
        return _shape_out(out, shape)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0):
        """Gaussian draws via Box-Muller."""
        shape, n = _normalize_size(size)
        pairs = (n + 1) // 2
        bits = self.raw(2 * pairs)
        u1 = ((bits[:pairs] >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)
        u2 = (bits[pairs:] >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return _shape_out(mean + std * z, shape)

    def integers(self, k: int, size=None):
        """Integers in [0, k) derived from 53-bit uniforms."""
        if k <= 0:
            raise ValueError("k must be positive")
        u = self.uniform(size=size if size is not None else ())
        out = np.minimum((np.asarray(u) * k).astype(np.int64), k - 1)
        return out if size is not None else int(out)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (stable argsort of raw keys)."""
        return np.argsort(self.raw(n), kind="stable")

    def shuffle(self, values):
        values = np.asarray(values)
        return values[self.permutation(len(values))]


def _normalize_size(size):
    if size is None:
        return None, 1
    if isinstance(size, (int, np.integer)):
        return (int(size),), int(size)
    shape = tuple(int(s) for s in size)
    n = 1
    for s in shape:
        n *= s
    return shape, n


def _shape_out(arr, shape):
    if shape is None:
        return float(arr[0])
    return arr.reshape(shape)
