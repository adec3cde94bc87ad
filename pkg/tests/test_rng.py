import numpy as np
import pytest

from gelflex.rng import Rng

MASK = 0xFFFFFFFFFFFFFFFF


def splitmix64_reference(seed, n):
    """Scalar splitmix64 as published, in plain Python integers."""
    out = []
    state = seed & MASK
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


@pytest.mark.parametrize("seed", [0, 1, 7, 42, 0xDEADBEEF, MASK])
def test_raw_stream_matches_scalar_reference(seed):
    got = Rng(seed).raw(64).tolist()
    assert got == splitmix64_reference(seed, 64)


def test_raw_stream_is_resumable():
    whole = Rng(7).raw(100)
    r = Rng(7)
    parts = np.concatenate([r.raw(10), r.raw(37), r.raw(53)])
    assert np.array_equal(whole, parts)


def test_same_seed_same_stream():
    a = Rng(123).uniform(1000)
    b = Rng(123).uniform(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Rng(124).uniform(1000))


def test_uniform_range_and_moments():
    u = Rng(5).uniform(200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 2e-3
    assert abs(u.var() - 1.0 / 12.0) < 1e-3


def test_uniform_bounds_rescaled():
    u = Rng(5).uniform(10_000, lo=-3.0, hi=2.0)
    assert u.min() >= -3.0 and u.max() < 2.0


def test_normal_moments():
    z = Rng(11).normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    # Symmetric tails, no NaN
    assert np.isfinite(z).all()
    assert abs((z > 0).mean() - 0.5) < 0.01


def test_normal_shift_scale():
    z = Rng(11).normal((500, 4), mean=2.0, std=0.5)
    assert z.shape == (500, 4)
    assert abs(z.mean() - 2.0) < 0.05


def test_integers_cover_range_uniformly():
    r = Rng(3)
    draws = r.integers(4, size=40_000)
    counts = np.bincount(draws, minlength=4)
    assert draws.min() == 0 and draws.max() == 3
    assert np.all(np.abs(counts - 10_000) < 500)


def test_permutation_is_a_permutation():
    p = Rng(9).permutation(257)
    assert sorted(p.tolist()) == list(range(257))
    assert np.array_equal(p, Rng(9).permutation(257))


def test_spawn_streams_are_independent_and_stable():
    r = Rng(77)
    a = r.spawn("init").raw(8)
    b = r.spawn("shuffle").raw(8)
    c = r.spawn("init", 3).raw(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # spawning does not consume from the parent
    assert np.array_equal(r.raw(4), Rng(77).raw(4))
    # and is reproducible
    assert np.array_equal(a, Rng(77).spawn("init").raw(8))


def test_scalar_draws():
    r = Rng(1)
    x = r.uniform()
    assert isinstance(x, float) and 0.0 <= x < 1.0
    k = r.integers(10)
    assert isinstance(k, int) and 0 <= k < 10
