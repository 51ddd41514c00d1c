import numpy as np
from hypothesis import given, strategies as st

from tensormc import rng

u64 = st.integers(min_value=-(1 << 63), max_value=(1 << 64) - 1)


@given(u64, st.integers(0, 1 << 40), st.integers(0, 1 << 40))
def test_pure_function_of_key(seed, stream, counter):
    a = rng.random_bits(rng.seed_array(seed), stream, counter)
    b = rng.random_bits(rng.seed_array(seed), stream, counter)
    assert np.array_equal(a, b)


def test_uniform_open_interval_and_moments():
    u = rng.uniform(7, rng.stream_id(rng.PROPOSAL, 0), np.arange(200_000, dtype=np.uint64))
    assert u.min() > 0.0 and u.max() < 1.0
    se = np.sqrt(1 / 12 / len(u))
    assert abs(u.mean() - 0.5) < 4 * se


def test_normal_moments():
    z = rng.normal(3, rng.stream_id(rng.PROPOSAL, 5), np.arange(200_000, dtype=np.uint64))
    n = len(z)
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1.0) < 4 * np.sqrt(2 / n)


def test_streams_and_seeds_differ():
    c = np.arange(1000, dtype=np.uint64)
    a = rng.normal(0, rng.stream_id(rng.PROPOSAL, 0), c)
    b = rng.normal(0, rng.stream_id(rng.PROPOSAL, 1), c)
    d = rng.normal(1, rng.stream_id(rng.PROPOSAL, 0), c)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15
    assert abs(np.corrcoef(a, d)[0, 1]) < 0.15
    assert not np.array_equal(a, b)


def test_vectorised_over_seeds_matches_scalar():
    seeds = rng.seed_array([0, 5, -1, 1 << 62])
    c = np.arange(16, dtype=np.uint64)
    batch = rng.normal(seeds[:, None], rng.stream_id(rng.DATA, 2), c[None, :])
    for i, s in enumerate([0, 5, -1, 1 << 62]):
        assert np.array_equal(batch[i], rng.normal(rng.seed_array(s)[0], rng.stream_id(rng.DATA, 2), c))


def test_stream_id_packs_purpose():
    assert rng.stream_id(rng.RESAMPLE, 3) != rng.stream_id(rng.PROPOSAL, 3)
    assert rng.stream_id(rng.PROPOSAL, 3) >> 32 == rng.PROPOSAL
