import numpy as np
import pytest

from current_lab.fourier import (
    CHECKS, gradient_check, infrared_check, log_convexity_check, mms_check, power_law_floor, run_checks,
    sliding_scale_check, spectrum, sum_rule_check,
)
from current_lab.lattice import ModelSpec, make_torus
from current_lab.tables import TwoPointTable

RING = TwoPointTable.ising_ring(64, 0.8)
CHAIN = TwoPointTable.from_exact(ModelSpec(make_torus(1, 12), 0.5))


def test_free_spectrum_is_flat(free_table):
    spec = spectrum(free_table)
    assert np.allclose(spec.values, 1.0, atol=1e-15)
    assert infrared_check(spec, 0.0).details["vacuous"]


def test_nearest_neighbour_spectrum():
    a = 0.1
    vals = np.zeros((6, 6))
    vals[0, 0] = 1.0
    for x in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        vals[x] = a
    spec = spectrum(TwoPointTable((6, 6), vals))
    p = spec.momenta
    expect = 1 + 2 * a * np.cos(p).sum(axis=-1)
    assert np.allclose(spec.values, expect, atol=1e-14)
    assert np.allclose(spec.dispersion[1, 0], 2 * (1 - np.cos(2 * np.pi / 6)))


@pytest.mark.parametrize("name", ["exact_2d_table", "exact_gs_table"])
def test_exact_tables_pass_every_check(name, request):
    table = request.getfixturevalue(name)
    res = run_checks(table)
    assert all(r.passed for r in res.values()), {k: v for k, v in res.items() if not v.passed}


def test_sum_rule_and_zero_mode(exact_2d_table):
    spec = spectrum(exact_2d_table)
    assert spec.values.flat[0] == pytest.approx(exact_2d_table.susceptibility(), abs=1e-12)
    res = sum_rule_check(spec, exact_2d_table)
    assert res.passed and res.details["sum_rule_deviation"] < 1e-12


def test_infrared_violation_is_detected():
    vals = np.full((4, 4), 5.0)
    vals[0, 0] = 50.0
    spec = spectrum(TwoPointTable((4, 4), vals))
    assert not infrared_check(spec, 1.0).passed


def test_sliding_scale_equal_radii(exact_2d_table):
    res = sliding_scale_check(exact_2d_table, [(2, 2)], beta=0.3)
    row = res.details["rows"][0]
    assert row["ratio"] == pytest.approx(1.0, abs=1e-15)
    assert row["naive_difference"] == 0.0
    with pytest.raises(ValueError):
        sliding_scale_check(exact_2d_table, [(2, 1)], beta=0.3)


def test_log_convexity_equality_for_pure_exponential():
    L, t = 40, 0.7
    n = np.arange(L)
    table = TwoPointTable((L,), t ** np.minimum(n, L - n))
    res = log_convexity_check(table)
    assert res.passed
    assert abs(res.worst_slack) < 1e-15
    assert log_convexity_check(RING).passed


def test_gradient_on_ring():
    res = gradient_check(RING)
    assert res.passed
    assert 0 < res.details["C_min"] < 4.0
    assert not gradient_check(RING, C=0.5 * res.details["C_min"]).passed


def test_mms_exact_tables():
    for table in (RING, CHAIN):
        res = mms_check(table)
        assert res.passed and res.n_checked > 0
    reversed_table = TwoPointTable((8,), np.array([1, 2, 3, 4, 5, 4, 3, 2], dtype=float))
    assert not mms_check(reversed_table).passed


def test_floor_is_positive(exact_2d_table):
    rep = power_law_floor(exact_2d_table, 0.3)
    assert rep.floor > 0 and len(rep.by_radius) == 2


def test_unknown_check(exact_2d_table):
    assert set(run_checks(exact_2d_table)) == set(CHECKS)
    with pytest.raises(ValueError):
        run_checks(exact_2d_table, ["nope"])
