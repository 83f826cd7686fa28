import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from current_lab.stats import batch_stderr, double_factorial_odd, jackknife, ksum, within_sigma
from current_lab.streams import map_chains, stream, thread_cap


def test_streams_are_reproducible_and_distinct(seed):
    a = stream(seed, "worm", 3).random(5)
    assert np.array_equal(a, stream(seed, "worm", 3).random(5))
    assert not np.array_equal(a, stream(seed, "worm", 4).random(5))
    assert not np.array_equal(a, stream(seed, "spins", 3).random(5))
    assert not np.array_equal(a, stream(seed + 1, "worm", 3).random(5))


def test_seed_range():
    with pytest.raises(ValueError):
        stream(-1, "worm")
    with pytest.raises(ValueError):
        stream(2**64, "worm")


def test_thread_cap_env(monkeypatch):
    monkeypatch.setenv("CURRENT_LAB_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("CURRENT_LAB_THREADS", "x")
    with pytest.raises(ValueError):
        thread_cap()


def test_map_chains_order_independent_of_threads(monkeypatch, seed):
    f = lambda c: stream(seed, "replay", c).random()
    monkeypatch.setenv("CURRENT_LAB_THREADS", "1")
    one = map_chains(f, 6)
    monkeypatch.setenv("CURRENT_LAB_THREADS", "4")
    assert map_chains(f, 6) == one


def test_double_factorial():
    assert [double_factorial_odd(n) for n in range(6)] == [1, 1, 3, 15, 105, 945]


def test_jackknife_linear_matches_batch_error():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(32, 3))
    v, e = jackknife(b, lambda m: m)
    assert np.allclose(v, b.mean(axis=0))
    assert np.allclose(e, batch_stderr(b))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_ksum_is_exact(xs):
    assert ksum(xs) == math.fsum(xs)


def test_within_sigma():
    assert within_sigma(1.2, 1.0, 0.1, 3.0)
    assert not within_sigma(1.5, 1.0, 0.1, 3.0)
