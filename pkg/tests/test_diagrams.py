import itertools
import math

import numpy as np
import pytest

from current_lab.diagrams import (
    bubble, chi, diagram_report, gaussianity_bound, improved_ratio_report, pairings, pairings_bruteforce,
    regular_scales, renormalized_coupling, scale_sequence, sigma, tree_sum, wick_count, wick_sum, with_error,
)
from current_lab.exact.spins import SpinOracle
from current_lab.lattice import GeometryError, ModelSpec, make_torus
from current_lab.tables import TwoPointTable


def brute_tree(table, pts):
    total = 0.0
    for u in itertools.product(*(range(s) for s in table.shape)):
        total += math.prod(float(table.S(np.array(u) - p)) for p in np.asarray(pts))
    return 2 * total


def brute_sigma(table, L):
    tor = table.torus
    box = tor.coords(tor.box_sites(L))
    return sum(float(table.S(a - b)) for a in box for b in box)


def test_free_field_sums(free_table):
    rep = diagram_report(free_table)
    assert rep.bubble == [1.0] * 5 and rep.chi == [1.0] * 5
    assert rep.monotone
    assert tree_sum(free_table, (0, 0), (1, 0), (0, 1), (2, 2)) == 0.0
    seq = scale_sequence(free_table)
    assert seq.lengths == [0] and seq.K == 0
    assert not any(s.P4 for s in regular_scales(free_table).scales)
    assert renormalized_coupling(free_table, 0.0, xi=1.0).g == 0.0


def test_sums_against_brute_force(exact_2d_table):
    t = exact_2d_table
    assert bubble(t, 0) == pytest.approx(t.values[0, 0] ** 2, abs=1e-15)
    assert chi(t, 2) == pytest.approx(t.susceptibility(), rel=1e-13)
    for L in (0, 1, 2):
        assert sigma(t, L) == pytest.approx(brute_sigma(t, L), rel=1e-12)
    with pytest.raises(GeometryError):
        bubble(t, 3)


def test_tree_sum_brute_force_and_symmetry(exact_gs_table):
    t = exact_gs_table
    pts = [(0, 0), (1, 0), (0, 2), (2, 1)]
    ref = brute_tree(t, pts)
    assert tree_sum(t, *pts) == pytest.approx(ref, rel=1e-12)
    for perm in itertools.permutations(pts):
        assert tree_sum(t, *perm) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("site_beta", [0.2, 0.4])
def test_tree_bound_exact(site_beta):
    model = ModelSpec(make_torus(2, 3), site_beta)
    table = TwoPointTable.from_exact(model)
    oracle = SpinOracle(model)
    tor = model.torus
    quads = [q for q in itertools.combinations(range(9), 4)][:40]
    pts = [tor.coords(np.array(q)) for q in quads]
    u4 = [(oracle.ursell4(*q), 0.0) for q in quads]
    rows = improved_ratio_report(table, pts, u4)
    assert all(r.holds for r in rows)
    assert max(r.ratio for r in rows) <= 1.0


def test_wick_counts():
    for n in range(1, 6):
        assert len(list(pairings(range(2 * n)))) == wick_count(n)
        assert len(pairings_bruteforce(2 * n)) == wick_count(n)
    with pytest.raises(ValueError):
        list(pairings(range(3)))


def test_wick_sum_same_point(free_table):
    assert wick_sum(free_table, [(0, 0)] * 4) == 3.0
    assert wick_sum(free_table, [(0, 0), (0, 0), (1, 1), (1, 1)]) == 1.0


def test_scale_sequence_growth(exact_2d_table):
    seq = scale_sequence(exact_2d_table, D=1.1)
    assert seq.verify()
    assert seq.lengths[0] == 0 and seq.K >= 1
    with pytest.raises(ValueError):
        scale_sequence(exact_2d_table, D=1.0)


def test_regular_scales_on_ring():
    rep = regular_scales(TwoPointTable.ising_ring(64, 0.8))
    assert rep.implication_ok
    assert rep.count >= 1
    first = rep.scales[0]
    assert first.n == 1 and first.regular


def test_renormalized_coupling_exact():
    model = ModelSpec(make_torus(2, 3), 0.3)
    table = TwoPointTable.from_exact(model)
    oracle = SpinOracle(model)
    total = float(np.abs(oracle.ursell4_tensor(0)).sum())
    xi = 0.7
    rep = renormalized_coupling(table, total, xi=xi)
    assert rep.g == pytest.approx(total / (xi**4 * table.susceptibility() ** 2), rel=1e-14)
    assert "xi-unreliable" in renormalized_coupling(table, total, xi=1.0).flags


def test_gaussianity_bound_two_routes(exact_2d_table):
    exact, err0, m0 = gaussianity_bound(exact_2d_table, 1)
    sampled, err, m1 = gaussianity_bound(exact_2d_table, 1, exact_limit=0, samples=20000)
    assert (m0, m1, err0) == ("exact", "sampled", 0.0)
    assert abs(exact - sampled) <= 4 * err


def test_with_error_uses_batches():
    rng = np.random.default_rng(0)
    b = 1 + 0.01 * rng.standard_normal((16, 4, 4))
    t = TwoPointTable((4, 4), b.mean(axis=0), b)
    val, err = with_error(t, lambda v: bubble(t, 1, v))
    assert err > 0 and val == pytest.approx(bubble(t, 1), rel=1e-3)
