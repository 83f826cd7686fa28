import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from current_lab.exact import (
    ExactModel, ParityError, SizeLimitError, SpinOracle, TraceSpace, collapsed_state_sum,
    coarse_switching_sides, current_state_sum, has_subcurrent, integer_current_sum, is_pairable,
    spin_correlation_bruteforce, ursell4_exact, verify_connectivity_identities, verify_disentangling,
    verify_orgaf, verify_simon, verify_switching, verify_tree_bound,
)
from current_lab.exact.checks import has_subcurrent_literal
from current_lab.exact.events import Connected, standard_family
from current_lab.lattice import Graph, ModelSpec, make_torus

TOL = 1e-12


def graph(n, edges, J=1.0):
    return Graph.from_edges(n, [(u, v, J) for u, v in edges])


def model(n, edges, beta):
    return ModelSpec(graph(n, edges), beta)


EDGE = model(2, [(0, 1)], 0.7)
TRIANGLE = model(3, [(0, 1), (1, 2), (0, 2)], 0.55)
PATH4 = model(4, [(0, 1), (1, 2), (2, 3)], 0.8)
K4 = model(4, list(itertools.combinations(range(4), 2)), 0.3)


def close(a, b, tol=TOL):
    return abs(a - b) <= tol * max(abs(a), abs(b), 1.0)


def test_spin_oracle_closed_forms():
    t = math.tanh(0.7)
    assert close(spin_correlation_bruteforce(EDGE, (0, 1)), t)
    th = math.tanh(0.55)
    assert close(spin_correlation_bruteforce(TRIANGLE, (0, 1)), (th + th**2) / (1 + th**3))
    assert close(spin_correlation_bruteforce(K4, ()), 1.0)


def test_current_sums_closed_forms():
    t = 0.7
    assert close(current_state_sum(EDGE, (0, 1), normalized=True), math.tanh(t))
    assert close(current_state_sum(EDGE, ()), math.cosh(t))
    with pytest.raises(ParityError):
        current_state_sum(EDGE, (0,))


def test_switching_single_edge():
    lhs, rhs = verify_switching(EDGE, (0, 1), (0, 1))
    assert close(lhs, math.sinh(0.7) ** 2) and close(rhs, math.cosh(0.7) ** 2 - 1)
    assert close(lhs, rhs)


@pytest.mark.parametrize("mdl", [TRIANGLE, PATH4, K4], ids=["triangle", "path", "K4"])
def test_three_routes_agree(mdl):
    """Trace transform, literal 3^E collapse and integer currents give the same sums."""
    g, t = mdl.graph, mdl.edge_parameters
    space = TraceSpace.of(mdl)
    for A in [(), (0, 1), (0, 2), (0, 1, 2, 3) if g.n_vertices == 4 else (1, 2)]:
        a = space.partition(A)
        b = collapsed_state_sum(g, t, A)
        assert close(a, b)
        if g.n_edges <= 4:
            c = integer_current_sum(g, t, A, n_max=30)
            assert close(a, c, 1e-11)
        # with a connectivity event
        ev = Connected(0, 1)(space)
        a = space.trace_law(A)[ev].sum()
        b = collapsed_state_sum(g, t, A, lambda m: bool(ev[m]))
        assert close(a, b)


def test_oracle_equivalence_all_even_sets():
    for mdl in (TRIANGLE, PATH4, K4):
        oracle = SpinOracle(mdl)
        n = mdl.graph.n_vertices
        for k in (0, 2, 4):
            for A in itertools.combinations(range(n), k):
                assert close(current_state_sum(mdl, A, normalized=True), oracle.correlation(A))


def test_size_limits():
    big = make_torus(2, 4)
    with pytest.raises(SizeLimitError):
        collapsed_state_sum(big.graph, np.ones(big.n_edges), ())


small_graphs = st.integers(2, 5).flatmap(lambda n: st.lists(
    st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]),
    min_size=1, max_size=5, unique_by=lambda e: (min(e), max(e))).map(lambda es: (n, es)))


@settings(max_examples=80, deadline=None)
@given(small_graphs, st.data())
def test_pairable_matches_exhaustive_search(ge, data):
    n, edges = ge
    g = graph(n, edges)
    current = data.draw(st.lists(st.integers(0, 2), min_size=g.n_edges, max_size=g.n_edges))
    size = data.draw(st.sampled_from([0, 2, 4] if n >= 4 else [0, 2]))
    B = data.draw(st.lists(st.integers(0, n - 1), min_size=size, max_size=size, unique=True))
    assert is_pairable(g, current, B) == has_subcurrent(g, current, B) == has_subcurrent_literal(g, current, B)


def test_pairable_parity_error():
    with pytest.raises(ParityError):
        is_pairable(EDGE.graph, [1], (0,))


@pytest.mark.parametrize("mdl", [TRIANGLE, PATH4, K4], ids=["triangle", "path", "K4"])
def test_switching_with_event_family(mdl):
    space = TraceSpace.of(mdl)
    n = mdl.graph.n_vertices
    events = standard_family(n, mdl.graph.n_edges)
    for A, B in [((0, 1), (0, 1)), ((0, 1), (1, 2)), ((0, 2), ())]:
        for ev in events:
            lhs, rhs = verify_switching(mdl, A, B, ev)
            assert close(lhs, rhs)


def test_ursell_dual_route():
    for mdl in (PATH4, K4):
        spin, curr = ursell4_exact(mdl, 0, 1, 2, 3)
        assert spin <= 0
        assert close(spin, curr)
    free = model(4, [(0, 1), (2, 3)], 0.0)
    assert ursell4_exact(free, 0, 1, 2, 3) == (0.0, 0.0)


def test_orgaf_identity():
    for A, B in [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 1), (0, 1))]:
        rel = verify_orgaf(K4, A, B)
        assert rel.holds


def test_tree_bound_examples():
    lhs, rhs = verify_tree_bound(K4, 0, 1, 2, 3)
    assert lhs <= rhs
    tor = ModelSpec(make_torus(2, 3), 0.35)
    lhs, rhs = verify_tree_bound(tor, 0, 4, 2, 7)
    assert lhs <= rhs


def test_connectivity_identities_K4():
    ctx = ExactModel(model(4, list(itertools.combinations(range(4), 2)), 0.25))
    for u, v in itertools.permutations((1, 2), 2):
        for rel in verify_connectivity_identities(ctx, 3, u, v, S_set=(u,)):
            assert rel.holds, rel


def test_prop2b_cut_vertex_large_t():
    path = model(3, [(0, 1), (1, 2)], 3.0)
    rels = verify_connectivity_identities(path, 2, 1, 1)
    assert rels[0].holds
    assert close(rels[0].lhs, 1.0)


def test_disentangling_triangle_pendant():
    mdl = model(4, [(0, 1), (1, 2), (0, 2), (2, 3)], 0.4)
    for rel in verify_disentangling(mdl, 0, 1, 2, 3, (2,)):
        assert rel.holds, rel


def test_simon_examples():
    t = 0.6
    path = model(3, [(0, 1), (1, 2)], t)
    lhs, rhs = verify_simon(path, {0, 1}, 0, 2)
    assert close(lhs, math.tanh(t) ** 2) and lhs <= rhs
    tor = ModelSpec(make_torus(2, 4), 0.3)
    box = tor.torus.box_sites(1)
    lhs, rhs = verify_simon(tor, box, 0, int(tor.torus.index([2, 0])))
    assert lhs <= rhs


def test_coarse_switching_orientation():
    mdl = model(4, [(0, 1), (1, 2), (2, 3), (0, 3)], 0.5)
    lhs, rhs = coarse_switching_sides(mdl, 0, 2, (1, 2))
    assert lhs <= rhs * (1 + 1e-12)
