"""Spin-sum oracle: exact Gibbs expectations by enumerating every configuration.

Works for any discrete symmetric single-site law (Ising, mean-field blocks,
explicit Griffiths-Simon blocks), streaming configurations in chunks so that
2^24 Ising states fit in memory.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from ..lattice import ExplicitGS, GSBlock, Ising, ModelSpec
from ..stats import ksum
from .currents import SizeLimitError

MAX_ORACLE_STATES = 1 << 24
CHUNK = 1 << 15


def discrete_site_law(site) -> tuple[np.ndarray, np.ndarray]:
    """(values, log-weights) of the single-site a-priori measure."""
    if isinstance(site, Ising):
        return np.array([-1.0, 1.0]), np.zeros(2)
    if isinstance(site, GSBlock):
        from ..gs import block_levels, calibrate_block

        cal = calibrate_block(site.lam, site.b, site.N)
        return block_levels(site.N, cal.g, cal.alpha)
    if isinstance(site, ExplicitGS):
        return explicit_block_levels(site)
    raise TypeError(f"unknown site measure {site!r}")


def explicit_block_levels(site: ExplicitGS) -> tuple[np.ndarray, np.ndarray]:
    N = site.N
    w = np.asarray(site.weights, dtype=float)
    K = np.triu(np.asarray(site.inner_couplings, dtype=float), 1)
    configs = 1 - 2 * ((np.arange(1 << N)[:, None] >> np.arange(N)) & 1)
    values = configs @ w
    logw = np.einsum("ci,ij,cj->c", configs, K, configs)
    # merge equal block values
    uniq, inv = np.unique(np.round(values, 12), return_inverse=True)
    shift = logw.max()
    agg = np.bincount(inv, weights=np.exp(logw - shift), minlength=len(uniq))
    return uniq, np.log(agg) + shift


class SpinOracle:
    """Exact expectations for a model on a small graph."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self.graph = model.graph
        self.values, self.logw = discrete_site_law(model.site)
        self.q = len(self.values)
        self.V = self.graph.n_vertices
        if float(self.q) ** self.V > MAX_ORACLE_STATES:
            raise SizeLimitError(f"{self.q}^{self.V} configurations exceeds the oracle limit")
        self.n_states = self.q ** self.V
        self.t = model.edge_parameters
        self._shift = self._max_log_weight()

    def _chunks(self):
        powers = self.q ** np.arange(self.V, dtype=np.int64)
        for start in range(0, self.n_states, CHUNK):
            idx = np.arange(start, min(start + CHUNK, self.n_states), dtype=np.int64)
            digits = (idx[:, None] // powers) % self.q
            phi = self.values[digits]
            energy = (self.t * phi[:, self.graph.edges[:, 0]] * phi[:, self.graph.edges[:, 1]]).sum(axis=1)
            logw = energy + self.logw[digits].sum(axis=1)
            yield phi, logw

    def _max_log_weight(self) -> float:
        return max(float(lw.max()) for _, lw in self._chunks())

    def expect_many(self, func) -> np.ndarray:
        """Exact ⟨func(φ)⟩ for a vectorised ``func`` returning (chunk, k) columns."""
        parts_num, parts_z = [], []
        for phi, logw in self._chunks():
            w = np.exp(logw - self._shift)
            vals = np.asarray(func(phi), dtype=float)
            if vals.ndim == 1:
                vals = vals[:, None]
            parts_num.append(w @ vals)
            parts_z.append(w.sum())
        num = np.stack(parts_num)
        z = ksum(parts_z)
        return np.array([ksum(num[:, k]) for k in range(num.shape[1])]) / z

    @cached_property
    def partition_log(self) -> float:
        parts = [np.exp(lw - self._shift).sum() for _, lw in self._chunks()]
        return float(np.log(ksum(parts)) + self._shift)

    def correlation(self, sites) -> float:
        """⟨prod_{x ∈ A} φ_x⟩ for a multiset A."""
        sites = list(sites)
        if not sites:
            return 1.0
        return float(self.expect_many(lambda phi: phi[:, sites].prod(axis=1))[0])

    def correlations(self, site_lists) -> np.ndarray:
        site_lists = [list(s) for s in site_lists]

        def func(phi):
            return np.stack([phi[:, s].prod(axis=1) if s else np.ones(len(phi)) for s in site_lists], axis=1)

        return self.expect_many(func)

    @cached_property
    def two_point(self) -> np.ndarray:
        """⟨φ_x φ_y⟩ matrix."""
        V = self.V
        parts = []
        zs = []
        for phi, logw in self._chunks():
            w = np.exp(logw - self._shift)
            parts.append((phi * w[:, None]).T @ phi)
            zs.append(w.sum())
        stack = np.stack(parts)
        z = ksum(zs)
        out = np.empty((V, V))
        for i in range(V):
            for j in range(V):
                out[i, j] = ksum(stack[:, i, j]) / z
        out.setflags(write=False)
        return out

    def ursell4(self, x, y, z, t) -> float:
        S = self.two_point
        four = self.correlation([x, y, z, t])
        return four - S[x, y] * S[z, t] - S[x, z] * S[y, t] - S[x, t] * S[y, z]

    def four_point_tensor(self, origin: int = 0) -> np.ndarray:
        """⟨φ_o φ_x φ_y φ_z⟩ for all (x, y, z)."""
        V = self.V
        acc = []
        zs = []
        for phi, logw in self._chunks():
            w = np.exp(logw - self._shift) * phi[:, origin]
            acc.append(np.einsum("c,cx,cy,cz->xyz", w, phi, phi, phi, optimize=True))
            zs.append(np.exp(logw - self._shift).sum())
        z = ksum(zs)
        stack = np.stack(acc)
        return np.apply_along_axis(ksum, 0, stack) / z if len(acc) > 1 else stack[0] / z

    def ursell4_tensor(self, origin: int = 0) -> np.ndarray:
        """U4(o, x, y, z) for all (x, y, z)."""
        S = self.two_point
        so = S[origin]
        four = self.four_point_tensor(origin)
        return (four - so[:, None, None] * S[None, :, :]
                - so[None, :, None] * S[:, None, :]
                - so[None, None, :] * S[:, :, None])

    def linear_moments(self, coeffs, max_order: int = 8) -> np.ndarray:
        """⟨T^k⟩ for k = 0..max_order with T = sum_x coeffs_x φ_x."""
        c = np.asarray(coeffs, dtype=float)
        return self.expect_many(lambda phi: (phi @ c)[:, None] ** np.arange(max_order + 1))


def spin_correlation_bruteforce(model: ModelSpec, sites) -> float:
    """⟨prod_{x∈A} σ_x⟩ by summing over all configurations."""
    if model.graph.n_vertices > 24:
        raise SizeLimitError("spin oracle limited to 24 vertices")
    return SpinOracle(model).correlation(sites)
