import numpy as np
import pytest

from current_lab.current_mc import (
    SamplerError, audit_detailed_balance, cluster_labels, connectivity_observable, crossing_event,
    empirical_parity_marginal, estimate_connect_prob, exact_parity_marginal, four_corner_sources,
    intersection_stats, mixing_probe, run_currents, worm_sample,
)
from current_lab.exact import TraceSpace
from current_lab.exact.events import Connected
from current_lab.lattice import GeometryError, Graph, ModelSpec, component_labels, make_torus

SQUARE = ModelSpec(Graph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 0.5)]), 0.6)


def test_union_find_matches_reference():
    rng = np.random.default_rng(1)
    g = make_torus(2, 6).graph
    for _ in range(20):
        mask = rng.random(g.n_edges) < 0.4
        a = cluster_labels(g.n_vertices, g.edges, mask)
        b = component_labels(g.n_vertices, g.edges[mask])
        same_a = a[:, None] == a[None, :]
        same_b = b[:, None] == b[None, :]
        assert np.array_equal(same_a, same_b)


@pytest.mark.parametrize("sources", [(), (0, 2)])
def test_worm_kernel_detailed_balance(sources):
    audit = audit_detailed_balance(SQUARE, sources)
    assert audit["balance_defect"] < 1e-14
    assert audit["row_defect"] < 1e-14
    assert audit["stationarity_defect"] < 1e-14


def test_parity_marginal_against_exact(seed):
    exact = exact_parity_marginal(SQUARE, (0, 2))
    mean, err = empirical_parity_marginal(SQUARE, (0, 2), samples=16000, seed=seed)
    for mask, p in exact.items():
        assert abs(mean.get(mask, 0.0) - p) <= 4 * err[mask] + 1e-3


def test_traces_have_requested_sources(seed):
    from current_lab.streams import stream

    cur = worm_sample(SQUARE, (1, 3), sweeps=5, rng=stream(seed, "worm", 0))
    assert set(cur.odd_vertices(SQUARE.graph.edges, 4)) == {1, 3}


def test_connectivity_against_exact(seed):
    space = TraceSpace.of(SQUARE)
    for A, x, y in [((0, 2), 0, 1), ((), 1, 3)]:
        exact = space.pair_probability(A, (), Connected(x, y)(space))
        est, err = estimate_connect_prob(SQUARE, A, x, y, chains=8, sweeps=1500, seed=seed)
        assert abs(est - exact) <= 3 * err
    assert estimate_connect_prob(SQUARE, (), 2, 2) == (1.0, 0.0)


def test_run_is_deterministic(seed):
    obs = connectivity_observable(SQUARE, [(0, 3)])
    a = run_currents(SQUARE, [()], obs, chains=8, sweeps=80, seed=seed)
    b = run_currents(SQUARE, [()], obs, chains=8, sweeps=80, seed=seed)
    c = run_currents(SQUARE, [()], obs, chains=8, sweeps=80, seed=seed + 1)
    assert np.array_equal(a.batches, b.batches)
    assert not np.array_equal(a.batches, c.batches)


def test_input_validation():
    obs = connectivity_observable(SQUARE, [(0, 3)])
    with pytest.raises(SamplerError):
        run_currents(SQUARE, [()], obs, chains=2)
    with pytest.raises(GeometryError):
        intersection_stats(SQUARE, (0, 1, 2, 3), [1, 2], 1)


def test_crossing_event_full_and_empty():
    m = ModelSpec(make_torus(2, 8), 0.4)
    g = m.graph
    full = np.ones(g.n_edges, dtype=bool)
    empty = np.zeros(g.n_edges, dtype=bool)
    assert crossing_event(m, full, full, 1, 2, 0)
    assert not crossing_event(m, full, empty, 1, 2, 0)


def test_intersection_stats_small_torus(seed):
    m = ModelSpec(make_torus(2, 8), 0.4)
    src = four_corner_sources(m.torus, 4)
    rep = intersection_stats(m, src, [1, 2], 1, chains=8, sweeps=40, seed=seed)
    assert rep.covering_failures == 0
    assert 0.0 <= rep.p_nonempty <= 1.0
    assert rep.conditional_mean >= rep.mean_size - 1e-12


def test_mixing_probe_runs(seed):
    m = ModelSpec(make_torus(2, 8), 0.3)
    rep = mixing_probe(m, [(), ()], 1, 3, chains=8, sweeps=40, seed=seed)
    assert rep.stderr >= 0 and 0 <= rep.p_inner <= 1


def test_single_current_connectivity(seed):
    space = TraceSpace.of(SQUARE)
    obs = connectivity_observable(SQUARE, [(1, 3), (0, 2)])
    run = run_currents(SQUARE, [(0, 2)], obs, chains=8, sweeps=1500, seed=seed)
    assert run.mean[1] == 1.0
    exact = space.probability((0, 2), Connected(1, 3)(space))
    assert abs(run.mean[0] - exact) <= 3 * run.stderr[0]
