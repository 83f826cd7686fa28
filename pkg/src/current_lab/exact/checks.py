"""Exact verification of the random-current identities and inequalities.

Every function returns the two sides of a relation, computed by independent
routes wherever possible: correlations on the "spin side" come from
:class:`SpinOracle`, probabilities on the "current side" from
:class:`TraceSpace`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..lattice import Graph, ModelSpec
from .currents import ParityError, TraceSpace, bilinear_sum, symmetric_difference, vertex_mask
from .events import Always, AllConnected, Connected, ConnectedToSet, Event, Pairable
from .spins import SpinOracle

IDENTITY_RTOL = 1e-12


@dataclass
class Relation:
    """One evaluated identity (lhs == rhs) or inequality (lhs <= rhs)."""

    name: str
    lhs: float
    rhs: float
    kind: str = "inequality"
    context: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        if self.kind == "identity":
            return abs(self.lhs - self.rhs) / max(abs(self.lhs), 1.0)
        return max(self.lhs - self.rhs, 0.0) / max(abs(self.rhs), 1.0)

    @property
    def holds(self) -> bool:
        return self.deviation <= IDENTITY_RTOL


class ExactModel:
    """Spin oracle and trace space of one Ising model, built lazily and shared."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self._space = None
        self._oracle = None

    @property
    def space(self) -> TraceSpace:
        if self._space is None:
            self._space = TraceSpace.of(self.model)
        return self._space

    @property
    def oracle(self) -> SpinOracle:
        if self._oracle is None:
            self._oracle = SpinOracle(self.model)
        return self._oracle

    @property
    def S(self) -> np.ndarray:
        """Two-point matrix with exact zeros between different graph components."""
        if getattr(self, "_S", None) is None:
            from ..lattice import component_labels

            lab = component_labels(self.model.graph.n_vertices, self.model.graph.edges)
            S = np.array(self.oracle.two_point)
            S[lab[:, None] != lab[None, :]] = 0.0
            S.setflags(write=False)
            self._S = S
        return self._S


def _ctx(model) -> ExactModel:
    return model if isinstance(model, ExactModel) else ExactModel(model)


def _event_mask(space, event):
    if event is None:
        return None
    return event(space) if isinstance(event, Event) else np.asarray(event, dtype=bool)


# ---------------------------------------------------------------------------
# sums and the switching lemma


def current_state_sum(model, sources, event: Event | None = None, normalized: bool = False) -> float:
    """sum_{∂n = A} w(n) F(n) under the three-state collapse.

    With ``normalized`` the sum is divided by the sourceless partition
    function, so F ≡ 1 gives ⟨σ_A⟩.
    """
    ctx = _ctx(model)
    sources = tuple(sources)
    if len(sources) % 2:
        raise ParityError(f"source set {sources} has odd size")
    space = ctx.space
    law = space.trace_law(sources)
    mask = _event_mask(space, event)
    from ..stats import ksum

    value = ksum(law if mask is None else law[mask])
    return value / space.partition(()) if normalized else value


def verify_switching(model, A, B, event: Event | None = None) -> tuple[float, float]:
    """Both sides of the switching lemma for an event of n1 + n2."""
    ctx = _ctx(model)
    space = ctx.space
    A, B = tuple(A), tuple(B)
    if len(A) % 2 or len(B) % 2:
        raise ParityError("source sets must have even size")
    ev = _event_mask(space, event)
    if ev is None:
        ev = np.ones(len(space.masks), dtype=bool)
    lhs = space.pair_sum(A, B, ev)
    rhs = space.pair_sum(symmetric_difference(A, B), (), ev & Pairable(_dedupe(B))(space))
    return lhs, rhs


def _dedupe(vertices) -> tuple[int, ...]:
    return symmetric_difference(vertices)


def is_pairable(graph: Graph, current, B) -> bool:
    """F_B membership of a current by the component-parity criterion."""
    B = tuple(B)
    if len(B) % 2:
        raise ParityError("pairing set must have even size")
    from ..lattice import component_labels

    open_edges = graph.edges[np.asarray(current) > 0]
    labels = component_labels(graph.n_vertices, open_edges)
    counts: dict[int, int] = {}
    for b in B:
        counts[labels[b]] = counts.get(labels[b], 0) + 1
    return all(c % 2 == 0 for c in counts.values())


def has_subcurrent(graph: Graph, current, B) -> bool:
    """Exhaustive search for m <= n with ∂m = B (the definition of F_B)."""
    target = vertex_mask(B)
    endpoint = [(1 << int(u)) | (1 << int(v)) for u, v in graph.edges]
    current = [int(c) for c in current]
    # only the parity of m(e) matters, and m(e) = 1 is available iff n(e) >= 1
    choices = [(0, 1) if n >= 1 else (0,) for n in current]
    for pick in itertools.product(*choices):
        bnd = 0
        for e, m in enumerate(pick):
            if m:
                bnd ^= endpoint[e]
        if bnd == target:
            return True
    return False


def has_subcurrent_literal(graph: Graph, current, B) -> bool:
    """Same search over every integer m(e) in 0..n(e) (slow, for audits)."""
    target = vertex_mask(B)
    endpoint = [(1 << int(u)) | (1 << int(v)) for u, v in graph.edges]
    for m in itertools.product(*[range(int(n) + 1) for n in current]):
        bnd = 0
        for e, k in enumerate(m):
            if k % 2:
                bnd ^= endpoint[e]
        if bnd == target:
            return True
    return False


# ---------------------------------------------------------------------------
# identities


def verify_normalization(model, sources) -> list[Relation]:
    """Current-side ⟨σ_A⟩ against the spin oracle, plus Z = 2^|V| Z_∅."""
    ctx = _ctx(model)
    space, oracle = ctx.space, ctx.oracle
    sources = tuple(sources)
    out = [Relation("correlation", current_state_sum(ctx, sources, normalized=True),
                    oracle.correlation(sources), "identity", {"A": sources})]
    if not sources:
        z_spin = oracle.partition_log
        z_curr = space.n_vertices * math.log(2.0) + math.log(space.partition(()))
        # compare log Z on the scale of the larger side
        out.append(Relation("partition", z_curr, z_spin, "identity"))
    return out


def verify_orgaf(model, A, B) -> Relation:
    """⟨σ_A⟩⟨σ_B⟩ / ⟨σ_A σ_B⟩ = P^{AΔB,∅}[F_B]."""
    ctx = _ctx(model)
    A, B = tuple(A), tuple(B)
    oracle, space = ctx.oracle, ctx.space
    ab = list(A) + list(B)
    denom = oracle.correlation(ab)
    lhs = oracle.correlation(A) * oracle.correlation(B) / denom
    ad = symmetric_difference(A, B)
    rhs = space.pair_probability(ad, (), Pairable(_dedupe(B))(space))
    return Relation("orgaf", lhs, rhs, "identity", {"A": A, "B": B})


def ursell4_exact(model, x, y, z, t) -> tuple[float, float]:
    """U4 from the spin oracle and from −2⟨σxσy⟩⟨σzσt⟩ P^{xy,zt}[x ↔ z]."""
    if len({x, y, z, t}) < 4:
        raise ValueError("four distinct vertices are required")
    ctx = _ctx(model)
    spin = ctx.oracle.ursell4(x, y, z, t)
    space = ctx.space
    sxy = space.correlation((x, y))
    szt = space.correlation((z, t))
    if sxy == 0 or szt == 0:
        return spin, 0.0
    prob = space.pair_probability((x, y), (z, t), Connected(x, z)(space))
    return spin, -2.0 * sxy * szt * prob


def verify_prop2b(model, origin, x, u) -> Relation:
    """P^{ox,∅}[u ↔ o] = ⟨σoσu⟩⟨σuσx⟩ / ⟨σoσx⟩."""
    ctx = _ctx(model)
    S, space = ctx.S, ctx.space
    src = symmetric_difference((origin,), (x,))
    lhs = space.pair_probability(src, (), Connected(u, origin)(space))
    rhs = S[origin, u] * S[u, x] / S[origin, x]
    return Relation("prop2b", lhs, rhs, "identity", {"o": origin, "x": x, "u": u})


# ---------------------------------------------------------------------------
# inequalities


def verify_tree_bound(model, x, y, z, t) -> tuple[float, float]:
    """(|U4|, 2 sum_u S(u,x)S(u,y)S(u,z)S(u,t))."""
    ctx = _ctx(model)
    S = ctx.S
    u4 = ctx.oracle.ursell4(x, y, z, t)
    tree = 2.0 * float(np.sum(S[:, x] * S[:, y] * S[:, z] * S[:, t]))
    return abs(u4), tree


def verify_connectivity_identities(model, x, u, v, origin: int = 0, S_set=None, y=None) -> list[Relation]:
    """The two-point connectivity relations around a source pair (o, x).

    Covers the exact one-point identity, the two-point random-walk bound,
    the sandwich for a third source u, and its set version with sources
    (o, x) and (o, y).
    """
    ctx = _ctx(model)
    S, space = ctx.S, ctx.space
    o = origin
    out: list[Relation] = []
    sox = S[o, x]
    if sox <= 0:
        return out
    out.append(verify_prop2b(ctx, o, x, u))
    src_ox = symmetric_difference((o,), (x,))
    both = AllConnected((o, u, v))(space)
    lhs = space.pair_probability(src_ox, (), both)
    rhs = (S[o, v] * S[v, u] * S[u, x] + S[o, u] * S[u, v] * S[v, x]) / sox
    out.append(Relation("prop3b", lhs, rhs, context={"o": o, "x": x, "u": u, "v": v}))
    # sandwich with sources (o,u) and (u,x), event v <-> u
    if S[o, u] > 0 and S[u, x] > 0:
        ev = Connected(v, u)(space)
        ou = symmetric_difference((o,), (u,))
        ux = symmetric_difference((u,), (x,))
        mid = space.pair_probability(ou, ux, ev)
        low = space.pair_probability(ou, (), ev)
        high = low + space.pair_probability((), ux, ev) - space.pair_probability((), (), ev)
        ctxd = {"o": o, "x": x, "u": u, "v": v}
        out.append(Relation("imp2", low, mid, context=ctxd))
        out.append(Relation("imp", mid, high, context=ctxd))
    if S_set is not None:
        y_ = x if y is None else y
        targets = tuple(S_set)
        ev = ConnectedToSet(o, targets)(space)
        oy = symmetric_difference((o,), (y_,))
        if S[o, y_] > 0:
            a = space.pair_probability(src_ox, (), ev)
            b = space.pair_probability(src_ox, oy, ev)
            c = a + space.pair_probability((), oy, ev) - space.pair_probability((), (), ev)
            ctxd = {"o": o, "x": x, "y": y_, "S": targets}
            out.append(Relation("ag_lower", a, b, context=ctxd))
            out.append(Relation("ag_upper", b, c, context=ctxd))
    return out


def verify_disentangling(model, x, y, z, t, S_set, origin: int = 0) -> list[Relation]:
    """Both disentangling inequalities (three- and four-current sums)."""
    ctx = _ctx(model)
    space = ctx.space
    out = []
    xy = symmetric_difference((x,), (y,))
    zt = symmetric_difference((z,), (t,))
    z_xy, z_zt, z0 = space.partition(xy), space.partition(zt), space.partition(())
    if z_xy > 0 and z_zt > 0:
        lhs = space.pair_probability(xy, zt, Connected(x, z)(space))
        law12 = space.pair_law(xy, ())
        law3 = space.trace_law(zt)
        rhs = bilinear_sum(law12, law3, space.cluster_bits(x), space.cluster_bits(z)) / (z_xy * z0 * z_zt)
        out.append(Relation("disentangle_3", lhs, rhs, context={"x": x, "y": y, "z": z, "t": t}))
    o = origin
    smask = vertex_mask(tuple(sorted(set(S_set))))
    ox = symmetric_difference((o,), (x,))
    oz = symmetric_difference((o,), (z,))
    oy = symmetric_difference((o,), (y,))
    ot = symmetric_difference((o,), (t,))
    parts = [space.partition(s) for s in (ox, oz, oy, ot)]
    if min(parts) > 0:
        cb = space.cluster_bits(o)
        lhs = bilinear_sum(space.pair_law(ox, ()), space.pair_law(oz, ()), cb & smask, cb)
        lhs /= parts[0] * parts[1] * z0 * z0
        rhs = bilinear_sum(space.pair_law(ox, oy), space.pair_law(oz, ot), cb & smask, cb)
        rhs /= parts[0] * parts[1] * parts[2] * parts[3]
        out.append(Relation("disentangle_4", lhs, rhs,
                            context={"o": o, "x": x, "y": y, "z": z, "t": t, "S": tuple(S_set)}))
    return out


def verify_simon(model, region, origin, y) -> tuple[float, float]:
    """Both sides of S(o,y) <= sum_{u∈Λ, v∉Λ} S(o,u) βJ_uv S(v,y)."""
    ctx = _ctx(model)
    region = set(int(r) for r in region)
    if origin not in region or y in region:
        raise ValueError("need origin inside and y outside the separating set")
    S = ctx.S
    g = ctx.model.graph
    beta = ctx.model.beta
    rhs = 0.0
    for (a, b), j in zip(g.edges.tolist(), g.couplings.tolist()):
        for u, v in ((a, b), (b, a)):
            if u in region and v not in region:
                rhs += S[origin, u] * beta * j * S[v, y]
    return float(S[origin, y]), rhs


def coarse_switching_sides(model, x, y, S_set, event: Event | None = None,
                           orientation: str = "outside-in") -> tuple[float, float]:
    """Both sides of the coarse switching bound for P^{xy,∅}[x ↔ S, E].

    The right side sums βJ_ab ⟨σxσa⟩⟨σbσy⟩/⟨σxσy⟩ P^{xa,by}[trace ∪ {ab} ∈ E]
    over edges ab with a ∉ S, b ∈ S (``outside-in``, the crossing edge
    entering S from the side of x). ``inside-out`` swaps the roles and is kept
    only to document that this variant fails.
    """
    ctx = _ctx(model)
    space, S = ctx.space, ctx.S
    targets = tuple(S_set)
    if x in targets:
        raise ValueError("x must lie outside S")
    g = ctx.model.graph
    beta = ctx.model.beta
    ev = _event_mask(space, event)
    if ev is None:
        ev = np.ones(len(space.masks), dtype=bool)
    hit = ConnectedToSet(x, targets)(space) & ev
    lhs = space.pair_probability(symmetric_difference((x,), (y,)), (), hit)
    inside = set(targets)
    terms = []
    for e, ((p, q), j) in enumerate(zip(g.edges.tolist(), g.couplings.tolist())):
        shifted = ev[space.masks | (1 << e)]
        for a, b in ((p, q), (q, p)):
            if orientation == "outside-in":
                ok = a not in inside and b in inside
            else:
                ok = a in inside and b not in inside
            if ok and S[x, a] > 0 and S[b, y] > 0:
                prob = space.pair_probability(symmetric_difference((x,), (a,)),
                                              symmetric_difference((b,), (y,)), shifted)
                terms.append(beta * j * S[x, a] * S[b, y] / S[x, y] * prob)
    from ..stats import ksum

    return lhs, ksum(terms)


def lebowitz(model, x, y, z, t) -> Relation:
    ctx = _ctx(model)
    return Relation("lebowitz", ctx.oracle.ursell4(x, y, z, t), 0.0, context={"q": (x, y, z, t)})
