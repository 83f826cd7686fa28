import numpy as np
import pytest

from current_lab.diagrams import exact_smeared_moments
from current_lab.exact.spins import SpinOracle
from current_lab.lattice import GeometryError, GSBlock, ModelSpec, make_torus
from current_lab.spin_mc import (
    Measure, SpinMCError, locate_pseudo_critical, magnetization_moments, sample_spins,
    smear_spec, smeared_moments, two_point, ursell4_mc,
)
from current_lab.tables import TwoPointTable

QUADS = ((0, 1, 3, 4), (0, 2, 4, 8))


@pytest.mark.parametrize("site", [None, GSBlock(3, 1.0, 0.5)], ids=["ising", "gs"])
def test_two_point_and_ursell_match_oracle(site, seed):
    kw = {} if site is None else {"site": site}
    model = ModelSpec(make_torus(2, 3), 0.3, **kw)
    run = sample_spins(model, sweeps=1600, chains=8, seed=seed, measure=Measure(quadruples=QUADS))
    table = two_point(run)
    exact = TwoPointTable.from_exact(model)
    err = table.errors
    fixed = err == 0
    assert np.allclose(table.values[fixed], exact.values[fixed], atol=1e-12)
    assert (np.abs(table.values - exact.values)[~fixed] / err[~fixed]).max() < 4
    oracle = SpinOracle(model)
    for q in QUADS:
        val, err = ursell4_mc(run, *q)
        assert abs(val - oracle.ursell4(*q)) <= 4 * err


def test_runs_are_deterministic(seed):
    model = ModelSpec(make_torus(2, 4), 0.3)
    a = sample_spins(model, sweeps=80, chains=8, seed=seed)
    b = sample_spins(model, sweeps=80, chains=8, seed=seed)
    c = sample_spins(model, sweeps=80, chains=8, seed=seed + 1)
    assert np.array_equal(a.batches["S"], b.batches["S"])
    assert not np.array_equal(a.batches["S"], c.batches["S"])


def test_smeared_moments_against_exact(seed):
    model = ModelSpec(make_torus(2, 4), 0.3)
    sm = smear_spec(model.torus, "indicator", 1)
    run = sample_spins(model, sweeps=2400, chains=8, seed=seed, measure=Measure(smear=sm))
    rep = smeared_moments(run)
    ex = exact_smeared_moments(model, sm)
    assert abs(rep.sigma - ex["sigma"]) <= 4 * rep.sigma_err
    for k in (1, 3):
        assert abs(rep.moments[k] - ex["moments"][k]) <= 4 * rep.moment_errors[k] + 1e-12
    assert abs(rep.normalized_gap - ex["normalized_gap"]) <= 4 * rep.normalized_gap_err + 1e-12


def test_magnetization_at_infinite_temperature(seed):
    model = ModelSpec(make_torus(2, 4), 0.0)
    m = magnetization_moments(sample_spins(model, sweeps=400, chains=8, seed=seed, measure=Measure(twopoint=False)))
    assert abs(m["chi"] - 1.0) <= 4 * m["chi_err"]
    assert abs(m["binder"]) <= 4 * m["binder_err"] + 0.2


def test_bad_requests():
    model = ModelSpec(make_torus(2, 4), 0.3)
    with pytest.raises(SpinMCError):
        sample_spins(model, chains=1)
    with pytest.raises(GeometryError):
        smear_spec(model.torus, "bump", 2)
    run = sample_spins(model, sweeps=16, chains=8, measure=Measure(quadruples=((0, 1, 2, 3),)))
    with pytest.raises(SpinMCError):
        ursell4_mc(run, 0, 1, 2, 5)
    with pytest.raises(SpinMCError):
        smeared_moments(run)


def test_locator_without_crossing(seed):
    with pytest.raises(SpinMCError, match="no Binder crossing"):
        locate_pseudo_critical(lambda L, b: ModelSpec(make_torus(2, L), b), [0.05, 0.1], [2, 4],
                               sweeps=64, chains=8, seed=seed)
