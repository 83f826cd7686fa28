"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal
summary under "acceptance criteria".
"""

import itertools
import math
import time

import numpy as np
import pytest

from current_lab.cli import execute
from current_lab.current_mc import connectivity_observable, four_corner_sources, intersection_stats, run_currents
from current_lab.diagrams import regular_scales, scale_sequence
from current_lab.exact import TraceSpace
from current_lab.exact.events import Connected
from current_lab.exact.harness import IDENTITY_SUITES, INEQUALITY_SUITES, run_suites
from current_lab.exact.spins import SpinOracle
from current_lab.fourier import SUM_RULE_TOL, run_checks
from current_lab.lattice import (
    GSBlock, Graph, ModelSpec, annular_cover_counts, annular_cover_counts_grid, covering_bound_check, make_torus,
)
from current_lab.spin_mc import Measure, locate_pseudo_critical, magnetization_moments, sample_spins, two_point, ursell4_mc
from current_lab.streams import stream
from current_lab.tables import TwoPointTable

SEED = 20261014
N_SIGMA = 3.0
LOCATOR_BETAS = [0.146, 0.148, 0.150, 0.152]
LOCATOR_SIZES = [6, 8]

pytestmark = pytest.mark.slow


@pytest.fixture(scope="session")
def beta_pc():
    """Binder crossing of the two small 4D tori, used as β_pc(L) for every L."""
    res = locate_pseudo_critical(lambda L, b: ModelSpec(make_torus(4, L), b), LOCATOR_BETAS, LOCATOR_SIZES,
                                 sweeps=1000, chains=8, seed=SEED)
    assert abs(res.beta_pc - 0.1497) < 0.002  # sanity: near the known 4D point
    return res.beta_pc


@pytest.fixture(scope="session")
def table_4d(beta_pc):
    run = sample_spins(ModelSpec(make_torus(4, 16), beta_pc), sweeps=400, chains=8, seed=SEED)
    return two_point(run)


def _suite_line(results):
    worst = max(r.max_deviation for r in results.values())
    checks = sum(r.n_checks for r in results.values())
    bad = sum(r.n_violations for r in results.values())
    return checks, bad, worst


def test_criterion_1_exact_identities(record):
    t0 = time.perf_counter()
    res = run_suites(IDENTITY_SUITES, max_vertices=4, fuzz=1000, max_edges=8, seed=SEED)
    wall = time.perf_counter() - t0
    checks, bad, worst = _suite_line(res)
    ok = bad == 0 and worst <= 1e-12 and all(r.n_checks > 0 for r in res.values()) and wall <= 300
    record("criterion 1", ok, f"{checks} identity checks, {bad} violations, max rel dev {worst:.2e}, {wall:.0f}s")
    assert ok, {k: v.as_dict() for k, v in res.items() if not v.passed}


def test_criterion_2_exact_inequalities(record):
    t0 = time.perf_counter()
    res = run_suites(INEQUALITY_SUITES, max_vertices=4, fuzz=1000, max_edges=8, seed=SEED)
    wall = time.perf_counter() - t0
    checks, bad, _ = _suite_line(res)
    ok = bad == 0 and all(r.n_checks > 0 for r in res.values()) and wall <= 600
    record("criterion 2", ok, f"{checks} inequality checks over {len(res)} suites, {bad} violations, {wall:.0f}s")
    assert ok, {k: v.as_dict() for k, v in res.items() if not v.passed}


# ---------------------------------------------------------------------------
# criterion 3


def _current_observables():
    """(label, model, sources, pairs) for worm + activation runs on exact-engine graphs."""
    square = Graph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 0.5)])
    k4 = Graph.from_edges(4, [(a, b, 1.0) for a, b in itertools.combinations(range(4), 2)])
    ring = make_torus(1, 6).graph
    cases = []
    for name, g, beta in (("square", square, 0.6), ("K4", k4, 0.3), ("ring6", ring, 0.5)):
        m = ModelSpec(g, beta)
        cases.append((name, m, [()], [(0, 2), (1, 3), (0, 1)]))
        cases.append((name, m, [(0, 2)], [(0, 2), (1, 3), (0, 1)]))
        cases.append((name, m, [(0, 2), ()], [(1, 3), (0, 1), (1, 2)]))
    return cases


def _spin_observables():
    """(label, estimate, stderr, exact) for spin MC on 2D L=3 tori, Ising and GS sites."""
    rows = []
    quads = ((0, 1, 3, 4), (0, 2, 4, 8))
    for label, site in (("ising", None), ("gs", GSBlock(3, 1.0, 0.5))):
        kw = {} if site is None else {"site": site}
        model = ModelSpec(make_torus(2, 3), 0.3, **kw)
        run = sample_spins(model, sweeps=2000, chains=8, seed=SEED, measure=Measure(quadruples=quads))
        table = two_point(run)
        exact = TwoPointTable.from_exact(model)
        for x in ((1, 0), (1, 1)):
            rows.append((f"{label} S{x}", float(table.S(x)), float(table.stderr(x)), float(exact.S(x))))
        if site is not None:
            rows.append((f"{label} S(0)", float(table.S((0, 0))), float(table.stderr((0, 0))), float(exact.S((0, 0)))))
        oracle = SpinOracle(model)
        for q in quads:
            val, err = ursell4_mc(run, *q)
            rows.append((f"{label} U4{q}", val, err, oracle.ursell4(*q)))
        mom = magnetization_moments(run)
        raw = oracle.linear_moments(np.ones(model.graph.n_vertices), 4)
        rows.append((f"{label} <M^2>", mom["M2"], mom["M2_err"], float(raw[2])))
        rows.append((f"{label} <M^4>", mom["M4"], mom["M4_err"], float(raw[4])))
    return rows


def test_criterion_3_sampler_validation(record):
    t0 = time.perf_counter()
    rows = []
    for name, model, sources, pairs in _current_observables():
        run = run_currents(model, sources, connectivity_observable(model, pairs), chains=8, sweeps=1500, seed=SEED)
        space = TraceSpace.of(model)
        for i, (x, y) in enumerate(pairs):
            event = Connected(x, y)(space)
            if len(sources) == 1:
                exact = space.probability(sources[0], event)
            else:
                exact = space.pair_probability(sources[0], sources[1], event)
            rows.append((f"{name} A={sources} {x}<->{y}", float(run.mean[i]), float(run.stderr[i]), exact))
    # switching consistency: P^{xy,∅}[u <-> x] against spin correlator ratios
    model = ModelSpec(Graph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 0.5)]), 0.6)
    corr = SpinOracle(model).two_point
    for u in (1, 3):
        run = run_currents(model, [(0, 2), ()], connectivity_observable(model, [(u, 0)]), chains=8, sweeps=1500,
                           seed=SEED + u)
        exact = corr[0, u] * corr[u, 2] / corr[0, 2]
        rows.append((f"switching a_02({u})", float(run.mean[0]), float(run.stderr[0]), exact))
    rows += _spin_observables()
    z = [(label, (est - ex) / err if err > 0 else (0.0 if abs(est - ex) <= 1e-12 else math.inf))
         for label, est, err, ex in rows]
    labels = {label for label, *_ in rows}
    bad = [(label, zz) for label, zz in z if abs(zz) > N_SIGMA]
    wall = time.perf_counter() - t0
    ok = not bad and len(labels) >= 30 and wall <= 900
    worst = max(abs(zz) for _, zz in z)
    record("criterion 3", ok, f"{len(labels)} observables, max |z| {worst:.2f}, {len(bad)} beyond 3σ, {wall:.0f}s")
    assert ok, bad


# ---------------------------------------------------------------------------
# criterion 4


def _covering_instance(rng, i):
    d = int(rng.integers(1, 5))
    K = int(rng.integers(1, 6))
    lengths = [int(rng.integers(1, 4))]
    for _ in range(K):
        lengths.append(2 * lengths[-1] + int(rng.integers(0, 3)))
    R = lengths[-1] + 2
    kind = i % 3
    if kind == 0:
        pts = rng.integers(-R, R + 1, size=(int(rng.integers(1, 40)), d))
    elif kind == 1:
        # hierarchical: one point per annulus around every existing point, one or two levels deep
        pts = [np.zeros(d, dtype=np.int64)]
        for _ in range(int(rng.integers(1, 3))):
            new = []
            for p in pts:
                for k in range(K):
                    r = int(rng.integers(lengths[k], lengths[k + 1] + 1))
                    v = rng.integers(-r, r + 1, size=d)
                    v[int(rng.integers(d))] = r * int(rng.choice([-1, 1]))
                    new.append(p + v)
            pts = pts + new
        pts = np.array(pts)
    else:
        pts = np.array([[ell] + [0] * (d - 1) for ell in lengths] + [[0] * d])
    return pts, lengths, K


def test_criterion_4_annular_covering(record):
    t0 = time.perf_counter()
    rng = stream(SEED, "covering", 0)
    violations = 0
    best = 0
    for i in range(10_000):
        pts, lengths, K = _covering_instance(rng, i)
        violations += not covering_bound_check(pts, lengths, K)
        best = max(best, int(annular_cover_counts(np.unique(pts, axis=0), lengths, K).min()))
    # periodic instances through the FFT route used by the sampler
    for i in range(200):
        L = 2 * int(rng.integers(4, 9))
        grid = rng.random((L, L)) < rng.uniform(0.01, 0.3)
        lengths = [1, 2, 4] if L >= 8 else [1, 2]
        counts = annular_cover_counts_grid(grid, lengths, len(lengths) - 1)[grid]
        violations += int(np.any(grid.sum() < 2.0 ** (counts / 5.0)))
    wall = time.perf_counter() - t0
    ok = violations == 0 and wall <= 60
    record("criterion 4", ok, f"10000 fuzzed + 200 periodic instances, {violations} violations, "
                              f"max min-M_u {best}, {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# criterion 5


def test_criterion_5_reflection_positivity(record, beta_pc, table_4d):
    t0 = time.perf_counter()
    run2 = sample_spins(ModelSpec(make_torus(2, 16), 0.3), sweeps=2000, chains=16, seed=SEED)
    table_2d = two_point(run2)
    failures = []
    summary = []
    for label, table, beta in (("4D L=16", table_4d, beta_pc), ("2D L=16", table_2d, 0.3)):
        res = run_checks(table, beta=beta, n_sigma=N_SIGMA)
        failures += [f"{label}:{k}" for k, v in res.items() if not v.passed]
        if res["sumrule"].details["sum_rule_deviation"] > SUM_RULE_TOL:
            failures.append(f"{label}:sumrule-tolerance")
        summary.append(f"{label} worst z {min(v.worst_z for v in res.values()):.2f}")
    wall = time.perf_counter() - t0
    ok = not failures and wall <= 3600
    record("criterion 5", ok, f"ir/sumrule/mms/sliding/logconvex/gradient/monotone; {'; '.join(summary)}; "
                              f"β_pc={beta_pc:.5f}; failures {failures or 'none'}")
    assert ok, failures


# ---------------------------------------------------------------------------
# criterion 6


def test_criterion_6_gs_construction(record, tmp_path):
    t0 = time.perf_counter()
    cfg = {"pipeline": "gs-calibrate", "seed": SEED,
           "gs": {"targets": [[1.0, 0.0], [10.0, 0.0], [1.0, 1.0]], "Ns": [100, 1000, 10000],
                  "residual_tol": 1e-6, "bruteforce_N": list(range(1, 21))}}
    rep = execute(cfg, tmp_path)
    wall = time.perf_counter() - t0
    ok = rep["passed"] and rep["results"]["bruteforce_max_relative_deviation"] <= 1e-12 and wall <= 600
    residuals = [a["residual"] for a in rep["assertions"] if a["name"].startswith("residual")]
    record("criterion 6", ok, f"brute force N<=20 dev {rep['results']['bruteforce_max_relative_deviation']:.1e}, "
                              f"max residual {max(residuals):.1e}, {wall:.0f}s")
    assert ok, [a for a in rep["assertions"] if not a["passed"]]


# ---------------------------------------------------------------------------
# criterion 7


def test_criterion_7_gaussianity_trend(record, beta_pc, tmp_path):
    t0 = time.perf_counter()
    cfg = {"pipeline": "full-gaussianity-study", "seed": SEED, "model": {"d": 4, "site": "ising"},
           "sampling": {"chains": 8, "sweeps": 800, "blocks": 8},
           "study": {"sizes": [8, 12, 16], "beta_pc": beta_pc, "profile": "bump"}}
    rep = execute(cfg, tmp_path)
    wall = time.perf_counter() - t0
    gaps = [f"{r['normalized_gap']:.3f}±{r['normalized_gap_err']:.3f}" for r in rep["results"]["rows"]]
    bubbles = [f"{r['bubble']:.2f}" for r in rep["results"]["rows"]]
    ok = rep["passed"] and wall <= 4 * 3600
    record("criterion 7", ok, f"gap L=8,12,16: {', '.join(gaps)}; B: {', '.join(bubbles)}; {wall:.0f}s")
    assert ok, [a for a in rep["assertions"] if not a["passed"]]


# ---------------------------------------------------------------------------
# criterion 8


def test_criterion_8_intersection_clustering(record, beta_pc, table_4d):
    t0 = time.perf_counter()
    lengths = scale_sequence(table_4d, D=2.0).covering_lengths()
    K = len(lengths) - 1
    model = ModelSpec(make_torus(4, 16), beta_pc)
    src = four_corner_sources(model.torus, 2 * lengths[K - 1])
    rep = intersection_stats(model, src, lengths, K, chains=8, sweeps=100, seed=SEED)
    wall = time.perf_counter() - t0
    ok = rep.conditional_mean > rep.mean_size and rep.covering_failures == 0 and wall <= 7200
    record("criterion 8", ok, f"lengths {lengths} K={K}: E[|T| | |T|>0]={rep.conditional_mean:.1f} > "
                              f"E|T|={rep.mean_size:.1f} (P(|T|>0)={rep.p_nonempty:.3f}), "
                              f"{rep.covering_failures} covering failures in {rep.n_samples} samples, {wall:.0f}s")
    assert ok


def test_regular_scales_on_critical_table(table_4d):
    # P1 spans Ann(n/2, 4n): at critical decay |x|^-(d-2) the Euclidean radius ratio 8 alone gives 64,
    # so a constant of order 100 is the natural scale; the default C = 10 is reported, not asserted
    assert regular_scales(table_4d, c=0.1, C=100).count >= 1
    default = regular_scales(table_4d)
    assert default.implication_ok
