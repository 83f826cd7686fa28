"""Exact current-state sums on small graphs.

Each edge current collapses to Zero / EvenPositive / Odd with weights
1, cosh t - 1, sinh t. Connectivity only sees the trace (which edges carry
current), and the source set only sees which edges are odd, so a sum over
currents with ∂n = A and a trace-measurable weight F can be reorganised as

    sum_ω F(ω) W_A(ω),   W_A(ω) = sum_{p ⊆ ω, ∂p = A} prod_{e∈p} sinh t_e prod_{e∈ω∖p} (cosh t_e - 1)

over trace masks ω. ``W_A`` is built from the odd-set indicator by one
butterfly per edge, which costs O(|E| 2^|E|) rather than 3^|E|.

Sums of two currents have trace ω₁ ∪ ω₂, so their trace law is the OR
convolution of the two single-current laws.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..lattice import Graph, ModelSpec
from ..stats import ksum

MAX_TRACE_EDGES = 20
DIRECT_PAIR_EDGES = 11
MAX_PAIR_EDGES = 18


class SizeLimitError(ValueError):
    """The requested exact computation exceeds the enumeration limits."""


class ParityError(ValueError):
    """A source set with an odd number of vertices was requested."""


def vertex_mask(vertices) -> int:
    bits = 0
    for v in vertices:
        bits ^= 1 << int(v)
    return bits


def symmetric_difference(*sets) -> tuple[int, ...]:
    out = 0
    for s in sets:
        out ^= vertex_mask(s)
    return tuple(v for v in range(out.bit_length()) if out >> v & 1)


def _butterfly(values: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """values[ω] <- sum_{ω' ⊆ ω} values[ω'] prod_{e∈ω∖ω'} factors[e]."""
    out = values.copy()
    for e, a in enumerate(factors):
        view = out.reshape(-1, 2, 1 << e)
        view[:, 1, :] += a * view[:, 0, :]
    return out


def subset_zeta(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for e in range(int(len(values)).bit_length() - 1):
        view = out.reshape(-1, 2, 1 << e)
        view[:, 1, :] += view[:, 0, :]
    return out


def subset_moebius(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for e in range(int(len(values)).bit_length() - 1):
        view = out.reshape(-1, 2, 1 << e)
        view[:, 1, :] -= view[:, 0, :]
    return out


class TraceSpace:
    """All 2^|E| trace masks of a graph with per-mask boundary and cluster data."""

    def __init__(self, graph: Graph, t: np.ndarray):
        E = graph.n_edges
        if E > MAX_TRACE_EDGES:
            raise SizeLimitError(f"{E} edges exceeds the exact limit of {MAX_TRACE_EDGES}")
        if graph.n_vertices > 62:
            raise SizeLimitError("vertex bitmasks need at most 62 vertices")
        self.graph = graph
        self.n_edges = E
        self.n_vertices = graph.n_vertices
        self.t = np.asarray(t, dtype=float)
        self.masks = np.arange(1 << E, dtype=np.int64)
        self.sinh = np.sinh(self.t)
        # cosh t - 1 without cancellation
        self.even = 2.0 * np.sinh(self.t / 2.0) ** 2
        self.cosh = np.cosh(self.t)

    @classmethod
    def of(cls, model: ModelSpec) -> "TraceSpace":
        if not model.is_ising:
            raise ValueError("current engines act on Ising models (decorate GS blocks first)")
        return cls(model.graph, model.edge_parameters)

    @cached_property
    def bits(self) -> np.ndarray:
        """(2^E, E) boolean membership of edges in masks."""
        return ((self.masks[:, None] >> np.arange(self.n_edges)) & 1).astype(bool)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Vertex bitmask of odd-degree vertices of each edge mask."""
        out = np.zeros(len(self.masks), dtype=np.int64)
        for e, (u, v) in enumerate(self.graph.edges):
            out ^= np.where(self.bits[:, e], (1 << int(u)) | (1 << int(v)), 0)
        return out

    @cached_property
    def odd_weight(self) -> np.ndarray:
        """prod_{e∈p} sinh t_e for every mask p."""
        return _butterfly(np.eye(1, len(self.masks), 0).ravel(), self.sinh)

    @cached_property
    def labels(self) -> np.ndarray:
        """(2^E, V) smallest-vertex component labels of each trace."""
        lab = np.tile(np.arange(self.n_vertices, dtype=np.int16), (len(self.masks), 1))
        edges = self.graph.edges
        changed = True
        while changed:
            changed = False
            for e, (u, v) in enumerate(edges):
                on = self.bits[:, e]
                m = np.minimum(lab[:, u], lab[:, v])
                upd = on & ((lab[:, u] != m) | (lab[:, v] != m))
                if upd.any():
                    changed = True
                    lab[upd, u] = m[upd]
                    lab[upd, v] = m[upd]
            # pointer jumping keeps the number of sweeps small
            lab = np.take_along_axis(lab, lab.astype(np.int64), axis=1)
        return lab

    @cached_property
    def n_components(self) -> np.ndarray:
        return (self.labels == np.arange(self.n_vertices)).sum(axis=1)

    def cluster_bits(self, x: int) -> np.ndarray:
        """Vertex bitmask of the cluster of x in each trace."""
        member = self.labels == self.labels[:, [x]]
        weights = (1 << np.arange(self.n_vertices, dtype=np.int64))
        return (member * weights).sum(axis=1)

    def trace_law(self, sources) -> np.ndarray:
        """W_A(ω): total collapsed weight of currents with ∂n = A and trace ω."""
        sources = tuple(sources)
        if len(sources) % 2:
            raise ParityError(f"source set {sources} has odd size")
        target = vertex_mask(sources)
        return self._trace_law_cached(target)

    def _trace_law_cached(self, target: int) -> np.ndarray:
        cache = self.__dict__.setdefault("_laws", {})
        if target not in cache:
            seed = np.where(self.boundary == target, self.odd_weight, 0.0)
            law = _butterfly(seed, self.even)
            law.setflags(write=False)
            cache[target] = law
        return cache[target]

    def partition(self, sources=()) -> float:
        """sum_{∂n=A} w(n) with the 3-state collapse (no 2^|V| factor)."""
        return ksum(self.trace_law(sources))

    def correlation(self, sources) -> float:
        sources = tuple(sources)
        if len(sources) % 2:
            return 0.0
        return self.partition(sources) / self.partition(())

    def probability(self, sources, event) -> float:
        """P^A[event] for a single current with ∂n = A."""
        law = self.trace_law(sources)
        return ksum(law[np.asarray(event, dtype=bool)]) / ksum(law)

    def pair_law(self, a_sources, b_sources) -> np.ndarray:
        """Unnormalised law of the trace of n1 + n2 with ∂n1 = A, ∂n2 = B."""
        return or_convolve(self.trace_law(a_sources), self.trace_law(b_sources))

    def pair_sum(self, a_sources, b_sources, event=None) -> float:
        law = self.pair_law(a_sources, b_sources)
        if event is None:
            return ksum(law)
        return ksum(law[np.asarray(event, dtype=bool)])

    def pair_probability(self, a_sources, b_sources, event) -> float:
        num = self.pair_sum(a_sources, b_sources, event)
        return num / (self.partition(a_sources) * self.partition(b_sources))


def or_convolve(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """(wa ⊛ wb)(ω) = sum_{ω1 | ω2 = ω} wa(ω1) wb(ω2)."""
    n = len(wa)
    E = n.bit_length() - 1
    if E > MAX_PAIR_EDGES:
        raise SizeLimitError(f"pair sums limited to {MAX_PAIR_EDGES} edges")
    ia = np.flatnonzero(wa)
    ib = np.flatnonzero(wb)
    if len(ia) * len(ib) <= 1 << (2 * DIRECT_PAIR_EDGES):
        union = (ia[:, None] | ib[None, :]).ravel()
        prod = np.outer(wa[ia], wb[ib]).ravel()
        return np.bincount(union, weights=prod, minlength=n)
    za = subset_zeta(wa.astype(np.longdouble))
    zb = subset_zeta(wb.astype(np.longdouble))
    out = subset_moebius(za * zb)
    return np.maximum(out.astype(float), 0.0)


def bilinear_sum(law_a: np.ndarray, law_b: np.ndarray, bits_a: np.ndarray, bits_b: np.ndarray) -> float:
    """sum_{ω,ω'} law_a(ω) law_b(ω') 1[bits_a(ω) & bits_b(ω') != 0]."""
    ia = np.flatnonzero(law_a)
    ib = np.flatnonzero(law_b)
    # group masks by their bit pattern to keep the matrix small
    ka, inv_a = np.unique(bits_a[ia], return_inverse=True)
    kb, inv_b = np.unique(bits_b[ib], return_inverse=True)
    sa = np.bincount(inv_a, weights=law_a[ia], minlength=len(ka))
    sb = np.bincount(inv_b, weights=law_b[ib], minlength=len(kb))
    hit = (ka[:, None] & kb[None, :]) != 0
    return ksum((sa[:, None] * sb[None, :])[hit])


# ---------------------------------------------------------------------------
# independent brute-force routes (small graphs only)


def collapsed_state_sum(graph: Graph, t, sources, event=None, max_edges: int = 12) -> float:
    """Literal sum over the 3^|E| collapsed edge states.

    ``event`` maps an open-edge mask (int) to bool; used as an independent
    check of :class:`TraceSpace`.
    """
    E = graph.n_edges
    if E > max_edges:
        raise SizeLimitError(f"3^{E} states exceeds the brute-force limit")
    if len(tuple(sources)) % 2:
        raise ParityError("odd source set")
    t = np.asarray(t, dtype=float)
    state_w = np.stack([np.ones(E), np.cosh(t) - 1.0, np.sinh(t)], axis=1)
    target = vertex_mask(sources)
    endpoint = [(1 << int(u)) | (1 << int(v)) for u, v in graph.edges]
    terms = []
    for states in itertools.product(range(3), repeat=E):
        bnd = 0
        mask = 0
        w = 1.0
        for e, s in enumerate(states):
            w *= state_w[e, s]
            if s:
                mask |= 1 << e
            if s == 2:
                bnd ^= endpoint[e]
        if bnd == target and (event is None or event(mask)):
            terms.append(w)
    return ksum(terms)


def integer_current_sum(graph: Graph, t, sources, event=None, n_max: int = 30) -> float:
    """Truncated sum over integer currents n(e) <= n_max of prod t^n / n!.

    The truncation error is below t^{n_max+1}/(n_max+1)! per edge, negligible
    for t <= 1 and n_max >= 25. ``event`` maps the integer current to bool.
    """
    import math

    E = graph.n_edges
    if (n_max + 1) ** E > 2_000_000:
        raise SizeLimitError("integer-current enumeration too large")
    t = np.asarray(t, dtype=float)
    target = vertex_mask(sources)
    endpoint = [(1 << int(u)) | (1 << int(v)) for u, v in graph.edges]
    per_edge = [[t[e] ** n / math.factorial(n) for n in range(n_max + 1)] for e in range(E)]
    terms = []
    for current in itertools.product(range(n_max + 1), repeat=E):
        bnd = 0
        w = 1.0
        for e, n in enumerate(current):
            w *= per_edge[e][n]
            if n % 2:
                bnd ^= endpoint[e]
        if bnd == target and (event is None or event(current)):
            terms.append(w)
    return ksum(terms)


@dataclass(frozen=True)
class Current:
    """Integer current on a graph."""

    graph: Graph
    values: tuple[int, ...]

    @property
    def sources(self) -> tuple[int, ...]:
        odd = 0
        for (u, v), n in zip(self.graph.edges, self.values):
            if n % 2:
                odd ^= (1 << int(u)) | (1 << int(v))
        return tuple(v for v in range(self.graph.n_vertices) if odd >> v & 1)

    @property
    def trace(self) -> np.ndarray:
        return np.array(self.values) > 0
