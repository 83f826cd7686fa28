import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from current_lab.lattice import ModelSpec, make_torus
from current_lab.tables import (
    TableError, TwoPointTable, correlation_length_exponential, correlation_length_second_moment, symmetrize,
)


def test_csv_roundtrip_with_batches(tmp_path):
    rng = np.random.default_rng(0)
    b = symmetrize(rng.random((8, 4, 4)), lead=1)
    t = TwoPointTable((4, 4), b.mean(axis=0), b, 0.3, "ising", 1.25)
    path = tmp_path / "t.csv"
    t.to_csv(path)
    u = TwoPointTable.from_csv(path)
    assert np.array_equal(u.values, t.values) and np.array_equal(u.batches, t.batches)
    assert u.beta == 0.3 and u.xi == 1.25 and not u.is_exact


def test_csv_rejects_incomplete(tmp_path, exact_2d_table):
    path = tmp_path / "t.csv"
    exact_2d_table.to_csv(path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(TableError):
        TwoPointTable.from_csv(path)


def test_csv_rejects_wrong_columns(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# shape=2\nx1,value,err\n0,1,0\n1,0.5,0\n")
    with pytest.raises(TableError):
        TwoPointTable.from_csv(path)


def test_tables_are_immutable(exact_2d_table):
    with pytest.raises(ValueError):
        exact_2d_table.values[0, 0] = 2.0


def test_ring_closed_form_matches_oracle():
    ring = TwoPointTable.ising_ring(10, 0.45)
    exact = TwoPointTable.from_exact(ModelSpec(make_torus(1, 10), 0.45))
    assert np.allclose(ring.values, exact.values, rtol=1e-12, atol=0)


def test_correlation_lengths_on_ring():
    t = TwoPointTable.ising_ring(400, 0.5)
    xi = -1 / np.log(np.tanh(0.5))
    assert correlation_length_exponential(t, (1, 20)) == pytest.approx(xi, rel=1e-9)
    assert correlation_length_second_moment(t) == pytest.approx(xi, rel=0.05)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 10_000))
def test_symmetrize_is_idempotent_and_invariant(L, d, s):
    a = np.random.default_rng(s).random((L,) * d)
    b = symmetrize(a)
    assert np.allclose(symmetrize(b), b)
    assert np.isclose(b.sum(), a.sum())
    for ax in range(d):
        flipped = np.roll(np.flip(b, axis=ax), 1, axis=ax)
        assert np.allclose(flipped, b)
