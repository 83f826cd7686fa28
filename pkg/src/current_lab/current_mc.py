"""Monte Carlo for sourced random currents on graphs and tori.

The parity layer η (one bit per edge, odd-degree set equal to the sources) is
sampled by a worm chain on the extended space ∂η = A Δ {head, tail} with
weight prod tanh(t_e)^η_e. Samples are taken while head == tail. Even edges
are then opened independently with probability 1 - 1/cosh(t_e), which gives
the law of {n(e) > 0} under the current measure.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .exact.currents import ParityError
from .lattice import GeometryError, ModelSpec, Torus, annular_cover_counts_grid, check_length_sequence
from .stats import batch_stderr, jackknife
from .streams import map_chains, stream

BUFFER = 64
MIN_CHAINS = 8


class SamplerError(ValueError):
    """Bad sampler parameters (too few chains, unreachable sources, ...)."""


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True, nogil=True)
def _worm_steps(nbr, eid, tanh, eta, state, u, p_record, buf, n_buf):
    """Advance the worm over the rows of ``u``; stop early when ``buf`` fills.

    state = [head, tail, closed-visit counter]. Returns (rows used, buffered).
    """
    V, width = nbr.shape
    h, t = state[0], state[1]
    closed = state[2]
    for i in range(u.shape[0]):
        if u[i, 0] < 0.5:
            if h == t:
                s = int(u[i, 1] * V)
                h = s
                t = s
        else:
            k = int(u[i, 1] * width)
            v = nbr[h, k]
            if v >= 0:
                e = eid[h, k]
                if eta[e] == 1 or u[i, 2] < tanh[e]:
                    eta[e] ^= 1
                    h = v
        if h == t:
            closed += 1
            if u[i, 3] < p_record:
                buf[n_buf, :] = eta
                n_buf += 1
                if n_buf == buf.shape[0]:
                    state[0], state[1], state[2] = h, t, closed
                    return i + 1, n_buf
    state[0], state[1], state[2] = h, t, closed
    return u.shape[0], n_buf


@numba.njit(cache=True, nogil=True)
def _cycle_flips(cycles, tanh, eta, u):
    """One Metropolis pass of whole-cycle flips (rows padded with -1)."""
    accepted = 0
    for c in range(cycles.shape[0]):
        ratio = 1.0
        for j in range(cycles.shape[1]):
            e = cycles[c, j]
            if e < 0:
                break
            if eta[e] == 0:
                ratio *= tanh[e]
            else:
                ratio /= tanh[e]
        if u[c] < ratio:
            for j in range(cycles.shape[1]):
                e = cycles[c, j]
                if e < 0:
                    break
                eta[e] ^= 1
            accepted += 1
    return accepted


@numba.njit(cache=True, nogil=True)
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@numba.njit(cache=True, nogil=True)
def _union_labels(n_vertices, edges, open_mask):
    """Cluster labels (smallest vertex of each cluster) of the open subgraph."""
    parent = np.arange(n_vertices)
    for e in range(edges.shape[0]):
        if open_mask[e]:
            a = _find(parent, edges[e, 0])
            b = _find(parent, edges[e, 1])
            if a < b:
                parent[b] = a
            elif b < a:
                parent[a] = b
    out = np.empty(n_vertices, dtype=np.int64)
    for v in range(n_vertices):
        out[v] = _find(parent, v)
    return out


def cluster_labels(n_vertices: int, edges: np.ndarray, open_mask: np.ndarray) -> np.ndarray:
    """Union-find labelling; x and y share a label iff joined by open edges."""
    return _union_labels(int(n_vertices), np.ascontiguousarray(edges, dtype=np.int64),
                         np.ascontiguousarray(open_mask, dtype=np.bool_))


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class TraceConfig:
    """Parity bits η_e with odd-degree set equal to ``sources``."""

    eta: np.ndarray
    sources: tuple[int, ...]

    def odd_vertices(self, edges: np.ndarray, n_vertices: int) -> tuple[int, ...]:
        deg = np.zeros(n_vertices, dtype=np.int64)
        on = edges[self.eta.astype(bool)]
        np.add.at(deg, on[:, 0], 1)
        np.add.at(deg, on[:, 1], 1)
        return tuple(np.flatnonzero(deg % 2).tolist())


@dataclass(frozen=True, eq=False)
class SampledCurrent:
    """A trace plus activated even edges; ``open`` realises {n(e) > 0}."""

    trace: TraceConfig
    open: np.ndarray
    stream_id: tuple = ()


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    labels: np.ndarray

    @classmethod
    def of(cls, model: ModelSpec, *open_masks: np.ndarray) -> "ClusterPartition":
        g = model.graph
        union = np.zeros(g.n_edges, dtype=bool)
        for m in open_masks:
            union |= m
        return cls(cluster_labels(g.n_vertices, g.edges, union))

    def connected(self, x: int, y: int) -> bool:
        return bool(self.labels[x] == self.labels[y])

    def cluster(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.labels == self.labels[x])


def _normalize_sources(sources, n_vertices) -> tuple[int, ...]:
    """Multiset of sources reduced mod 2, sorted."""
    counts: dict[int, int] = {}
    for s in sources:
        s = int(s)
        if not 0 <= s < n_vertices:
            raise GeometryError(f"source {s} outside the graph")
        counts[s] = counts.get(s, 0) ^ 1
    out = tuple(sorted(s for s, c in counts.items() if c))
    if len(out) % 2:
        raise ParityError(f"source set {tuple(sources)} has odd size")
    return out


def _bfs_path_edges(model: ModelSpec, a: int, b: int) -> list[int]:
    nbr, eid, _ = model.graph.adjacency
    prev = {a: (-1, -1)}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        if v == b:
            break
        for w, e in zip(nbr[v], eid[v]):
            if w >= 0 and w not in prev and model.edge_parameters[e] > 0:
                prev[int(w)] = (v, int(e))
                queue.append(int(w))
    if b not in prev:
        raise SamplerError(f"sources {a} and {b} are not joined by a positive-coupling path")
    out = []
    v = b
    while v != a:
        v, e = prev[v]
        out.append(e)
    return out


# ---------------------------------------------------------------------------
# the chain


class WormChain:
    """One worm chain delivering parity samples with ∂η = sources.

    ``interval`` is the mean number of sweeps (one sweep = one worm step per
    edge) between recorded samples; the recording probability per closed
    visit is fixed from the burn-in visit rate and then frozen, so samples
    are a thinning of the stationary closed-worm sequence.
    """

    def __init__(self, model: ModelSpec, sources=(), rng: np.random.Generator | None = None,
                 burn_in: float = 10.0, interval: float = 1.0, cycles: np.ndarray | None = None):
        if not model.is_ising:
            raise SamplerError("the current sampler covers Ising models")
        g = model.graph
        if g.n_edges == 0:
            raise SamplerError("graph has no edges")
        self.model = model
        self.sources = _normalize_sources(sources, g.n_vertices)
        self.rng = rng if rng is not None else stream(0, "worm", 0)
        nbr, eid, _ = g.adjacency
        self._nbr = np.ascontiguousarray(nbr)
        self._eid = np.ascontiguousarray(eid)
        self.tanh = np.tanh(model.edge_parameters)
        self.eta = np.zeros(g.n_edges, dtype=np.uint8)
        pairs = [self.sources[i:i + 2] for i in range(0, len(self.sources), 2)]
        for a, b in pairs[:-1]:
            for e in _bfs_path_edges(model, a, b):
                self.eta[e] ^= 1
        if pairs:
            a, b = pairs[-1]
            _bfs_path_edges(model, a, b)
            self.state = np.array([a, b, 0], dtype=np.int64)
        else:
            self.state = np.array([0, 0, 0], dtype=np.int64)
        if cycles is None:
            cycles = model.torus.plaquettes() if model.torus is not None else g.short_cycles(4)
        self.cycles = np.ascontiguousarray(cycles, dtype=np.int64).reshape(-1, 4) if len(cycles) else np.zeros((0, 4), np.int64)
        self.sweep = g.n_edges
        self.steps = 0
        self._buf = np.zeros((BUFFER, g.n_edges), dtype=np.uint8)
        self._ready: deque[np.ndarray] = deque()
        self.p_record = 0.0
        self._burn(burn_in)
        rate = self.state[2] / max(self.steps, 1)
        self.p_record = 1.0 if rate == 0 else min(1.0, 1.0 / (rate * interval * self.sweep))

    def _advance(self, n_sweeps: int) -> None:
        """Run whole sweeps of worm steps, each followed by a cycle-flip pass."""
        for _ in range(n_sweeps):
            u = self.rng.random((self.sweep, 4))
            used = 0
            while used < self.sweep:
                k, n = _worm_steps(self._nbr, self._eid, self.tanh, self.eta, self.state,
                                   u[used:], self.p_record, self._buf, 0)
                used += k
                for i in range(n):
                    self._ready.append(self._buf[i].copy())
            self.steps += self.sweep
            if len(self.cycles):
                _cycle_flips(self.cycles, self.tanh, self.eta, self.rng.random(len(self.cycles)))

    def _burn(self, sweeps: float) -> None:
        self._advance(int(math.ceil(sweeps)))
        self._ready.clear()

    def next_trace(self) -> np.ndarray:
        while not self._ready:
            self._advance(1)
        return self._ready.popleft()


def activate_even(trace: TraceConfig, model: ModelSpec, rng: np.random.Generator) -> SampledCurrent:
    """Open each even edge independently with probability (cosh t - 1)/cosh t."""
    p_open = 1.0 - 1.0 / np.cosh(model.edge_parameters)
    opened = trace.eta.astype(bool) | (rng.random(len(trace.eta)) < p_open)
    return SampledCurrent(trace, opened)


def worm_sample(model: ModelSpec, sources=(), sweeps: int = 100, rng: np.random.Generator | None = None,
                beta_max: float | None = None) -> TraceConfig:
    """One parity configuration after ``sweeps`` sweeps of burn-in."""
    if beta_max is not None and model.beta > beta_max:
        raise SamplerError(f"beta {model.beta} above the configured maximum {beta_max}")
    chain = WormChain(model, sources, rng, burn_in=sweeps)
    return TraceConfig(chain.next_trace(), chain.sources)


# ---------------------------------------------------------------------------
# batched estimation


@dataclass
class CurrentRun:
    """Per-batch means of an observable vector; batches = chains x blocks."""

    batches: np.ndarray
    n_samples: int
    labels: tuple[str, ...] = ()

    @property
    def mean(self) -> np.ndarray:
        return self.batches.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        return batch_stderr(self.batches)


Observable = Callable[[list[np.ndarray]], np.ndarray]


def run_currents(model: ModelSpec, source_sets: Sequence[Sequence[int]], observable: Observable,
                 chains: int = 16, sweeps: int = 1000, blocks: int = 8, seed: int = 20261014,
                 burn_fraction: float = 0.1, interval: float = 1.0, dump: list | None = None) -> CurrentRun:
    """Sample independent currents with the given source sets and average ``observable``.

    Each chain holds one worm per source set; one sample is a list of open
    masks, one per current. ``sweeps`` samples are collected per chain.
    """
    if chains < MIN_CHAINS:
        raise SamplerError(f"need at least {MIN_CHAINS} chains, got {chains}")
    if sweeps < blocks:
        raise SamplerError("need at least one sample per block")
    n_cur = len(source_sets)
    p_open = 1.0 - 1.0 / np.cosh(model.edge_parameters)
    per_block = sweeps // blocks

    def one_chain(c):
        worms = [WormChain(model, src, stream(seed, "worm", c * n_cur + j),
                           burn_in=max(1.0, burn_fraction * sweeps * interval), interval=interval)
                 for j, src in enumerate(source_sets)]
        act = stream(seed, "activation", c)
        out = []
        lines = []
        for _ in range(blocks):
            acc = None
            for _ in range(per_block):
                masks = []
                for w in worms:
                    eta = w.next_trace()
                    masks.append(eta.astype(bool) | (act.random(len(eta)) < p_open))
                val = np.asarray(observable(masks), dtype=float)
                acc = val if acc is None else acc + val
                if dump is not None:
                    lines.append(" ".join(np.packbits(m, bitorder="little").tobytes().hex() for m in masks))
            out.append(acc / per_block)
        return np.stack(out), lines

    results = map_chains(one_chain, chains)
    if dump is not None:
        for _, lines in results:
            dump.extend(lines)
    return CurrentRun(np.concatenate([r[0] for r in results]), chains * blocks * per_block)


def _labels_of(model, masks):
    g = model.graph
    union = masks[0].copy()
    for m in masks[1:]:
        union |= m
    return cluster_labels(g.n_vertices, g.edges, union)


def connectivity_observable(model: ModelSpec, pairs: Sequence[tuple[int, int]]) -> Observable:
    """Indicators of x <-> y in the union of all sampled currents."""
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])

    def obs(masks):
        lab = _labels_of(model, masks)
        return (lab[xs] == lab[ys]).astype(float)

    return obs


def estimate_connect_prob(model: ModelSpec, A, x: int, y: int, chains: int = 16, sweeps: int = 1000,
                          seed: int = 20261014, second=(), **kw) -> tuple[float, float]:
    """P^{A,B}[x <-> y in n1 + n2] with n1 ~ P^A, n2 ~ P^B (B empty by default)."""
    if chains < MIN_CHAINS:
        raise SamplerError(f"need at least {MIN_CHAINS} chains, got {chains}")
    if x == y:
        return 1.0, 0.0
    run = run_currents(model, [A, second], connectivity_observable(model, [(x, y)]), chains, sweeps, seed=seed, **kw)
    return float(run.mean[0]), float(run.stderr[0])


# ---------------------------------------------------------------------------
# intersections and covering


def crossing_event(model: ModelSpec, open_a: np.ndarray, open_b: np.ndarray, inner: int, outer: int,
                   center: int = 0) -> bool:
    """I_k: unique crossing clusters of Ann(inner, outer) in both currents, and they intersect.

    Clusters are taken in the subgraph of open edges with both ends in the
    annulus; a crossing cluster meets both the inner and the outer boundary.
    """
    torus = model.torus
    if torus is None:
        raise GeometryError("I_k needs a torus")
    norm = torus.sup_norm(torus.coords() - torus.coords(center))
    inside = (norm >= inner) & (norm <= outer)
    g = model.graph
    keep = inside[g.edges[:, 0]] & inside[g.edges[:, 1]]

    def crossing(open_mask):
        lab = cluster_labels(g.n_vertices, g.edges, open_mask & keep)
        lo = set(lab[norm == inner].tolist())
        hi = set(lab[(norm == outer)].tolist())
        return lo & hi, lab

    ca, lab_a = crossing(open_a)
    cb, lab_b = crossing(open_b)
    if len(ca) != 1 or len(cb) != 1:
        return False
    (ra,), (rb,) = ca, cb
    return bool(np.any((lab_a == ra) & (lab_b == rb) & inside))


def four_corner_sources(torus: Torus, spacing: int) -> tuple[int, int, int, int]:
    """x, y, z, t at the corners of a square with the given side (axes 0 and 1)."""
    if torus.d < 2 or spacing > torus.half_side:
        raise GeometryError(f"four sources at mutual distance {spacing} do not fit on {torus.shape}")
    pts = [(0, 0), (spacing, 0), (0, spacing), (spacing, spacing)]
    rest = (0,) * (torus.d - 2)
    return tuple(int(torus.index(list(p) + list(rest))) for p in pts)


@dataclass
class IntersectionReport:
    p_nonempty: float
    p_nonempty_err: float
    mean_size: float
    mean_size_err: float
    conditional_mean: float
    conditional_mean_err: float
    clustering_tail: float
    clustering_tail_err: float
    covering_failures: int
    n_samples: int
    lengths: list[int]
    K: int
    delta: float
    crossing_frequency: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def intersection_stats(model: ModelSpec, sources: Sequence[int], lengths: Sequence[int], K: int,
                       chains: int = 16, sweeps: int = 200, delta: float = 0.5, seed: int = 20261014,
                       **kw) -> IntersectionReport:
    """Statistics of 𝒯 = C_{n1+n3}(x) ∩ C_{n2+n4}(z) with n1 ~ P^{xy}, n2 ~ P^{zt}, n3, n4 ~ P^∅.

    For every sample the covering bound |𝒯| >= 2^{M_u/5} is re-checked for
    each u in 𝒯; failures are counted (they would be a bug).
    """
    torus = model.torus
    if torus is None:
        raise GeometryError("intersection statistics need a torus")
    x, y, z, t = (int(s) for s in sources)
    seq = check_length_sequence(lengths)
    if not 1 <= K <= len(seq) - 1:
        raise GeometryError(f"K={K} needs {K + 1} lengths")
    coords = torus.coords()
    pts = coords[[x, y, z, t]]
    dists = torus.sup_norm(pts[:, None, :] - pts[None, :, :])
    if np.any(dists[~np.eye(4, dtype=bool)] < 2 * seq[K - 1]) or seq[K] > torus.half_side:
        raise GeometryError("sources are closer than 2 l_K or the annuli exceed the torus")
    failures = [0]

    def obs(masks):
        n1, n2, n3, n4 = masks
        g = model.graph
        la = cluster_labels(g.n_vertices, g.edges, n1 | n3)
        lb = cluster_labels(g.n_vertices, g.edges, n2 | n4)
        inter = np.flatnonzero((la == la[x]) & (lb == lb[z]))
        size = len(inter)
        crossings = [crossing_event(model, n1 | n3, n2 | n4, int(seq[k]), int(seq[k + 1]), x)
                     for k in range(K)]
        if size == 0:
            return np.array([0.0, 0.0, 0.0, 0.0, *map(float, crossings)])
        grid = np.zeros(g.n_vertices)
        grid[inter] = 1.0
        counts = annular_cover_counts_grid(grid.reshape(torus.shape), seq, K).ravel()[inter]
        if np.any(size < 2.0 ** (counts / 5.0)):
            failures[0] += 1
        low = float(np.count_nonzero(counts < delta * K))
        return np.array([1.0, float(size), low, float(size), *map(float, crossings)])

    run = run_currents(model, [(x, y), (z, t), (), ()], obs, chains, sweeps, seed=seed, **kw)
    b = run.batches
    mean, err = run.mean, run.stderr
    cond, cond_err = jackknife(b[:, [3, 0]], lambda v: v[0] / v[1] if v[1] > 0 else 0.0)
    tail, tail_err = jackknife(b[:, [2, 3]], lambda v: v[0] / v[1] if v[1] > 0 else 0.0)
    return IntersectionReport(
        float(mean[0]), float(err[0]), float(mean[1]), float(err[1]),
        float(cond), float(cond_err), float(tail), float(tail_err),
        failures[0], run.n_samples, seq.tolist(), K, delta,
        [float(v) for v in mean[4:]],
    )


# ---------------------------------------------------------------------------
# mixing probe


def cluster_exits_box(n: int, site: int = 0):
    """Event: the cluster of ``site`` contains a point at sup-distance > n."""

    def event(model, labels, open_union):
        norm = model.torus.site_sup_norm
        return bool(np.any((labels == labels[site]) & (norm > n)))

    return event


def open_edge_outside(N: int):
    """Event: some open edge has an endpoint at sup-distance > N."""

    def event(model, labels, open_union):
        norm = model.torus.site_sup_norm
        g = model.graph
        far = (norm[g.edges[:, 0]] > N) | (norm[g.edges[:, 1]] > N)
        return bool(np.any(open_union & far))

    return event


def full_event(model, labels, open_union):
    return True


EVENTS = {"cluster-exits": cluster_exits_box, "open-edge-outside": open_edge_outside}


@dataclass
class MixingReport:
    n: int
    N: int
    covariance: float
    stderr: float
    p_inner: float
    p_outer: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def mixing_probe(model: ModelSpec, source_sets, n: int, N: int, inner_event=None, outer_event=None,
                 chains: int = 16, sweeps: int = 400, seed: int = 20261014, **kw) -> MixingReport:
    """|P[E ∩ F] - P[E] P[F]| for an inner event E and an outer event F.

    Events are functions (model, labels, open_union) -> bool evaluated on the
    union of the sampled currents. Defaults: E = cluster of the origin exits
    Λ_n, F = an open edge outside Λ_N.
    """
    torus = model.torus
    if torus is None or not (0 < n <= N <= torus.half_side):
        raise GeometryError("mixing probe needs 0 < n <= N <= L/2 on a torus")
    E = inner_event or cluster_exits_box(n)
    F = outer_event or open_edge_outside(N)
    g = model.graph

    def obs(masks):
        union = masks[0].copy()
        for m in masks[1:]:
            union |= m
        lab = cluster_labels(g.n_vertices, g.edges, union)
        e, f = float(E(model, lab, union)), float(F(model, lab, union))
        return np.array([e, f, e * f])

    run = run_currents(model, list(source_sets), obs, chains, sweeps, seed=seed, **kw)
    cov, err = jackknife(run.batches, lambda v: abs(v[2] - v[0] * v[1]))
    return MixingReport(n, N, float(cov), float(err), float(run.mean[0]), float(run.mean[1]))


def mixing_trend(model: ModelSpec, source_sets, n: int, ratios: Sequence[int], **kw) -> list[MixingReport]:
    """Mixing probe at N = r n for each ratio r (a reported trend, never asserted)."""
    return [mixing_probe(model, source_sets, n, r * n, **kw) for r in ratios]


# ---------------------------------------------------------------------------
# audits


def extended_states(model: ModelSpec, sources=()):
    """All (η, head, tail) of the worm space with positive weight (small graphs)."""
    g = model.graph
    if g.n_edges > 12:
        raise SamplerError("audit enumerates 2^E parity states; at most 12 edges")
    src = _normalize_sources(sources, g.n_vertices)
    tanh = np.tanh(model.edge_parameters)
    states, weights = [], []
    for mask in range(1 << g.n_edges):
        eta = np.array([(mask >> e) & 1 for e in range(g.n_edges)], dtype=np.uint8)
        odd = set(TraceConfig(eta, ()).odd_vertices(g.edges, g.n_vertices)) ^ set(src)
        w = float(np.prod(np.where(eta == 1, tanh, 1.0)))
        if w == 0:
            continue
        if not odd:
            for s in range(g.n_vertices):
                states.append((mask, s, s))
                weights.append(w)
        elif len(odd) == 2:
            a, b = sorted(odd)
            states.append((mask, a, b))
            states.append((mask, b, a))
            weights += [w, w]
    return states, np.array(weights)


def worm_transition_matrix(model: ModelSpec, sources=()):
    """Exact worm transition matrix (without cycle flips) on the extended space."""
    g = model.graph
    states, weights = extended_states(model, sources)
    index = {s: i for i, s in enumerate(states)}
    nbr, eid, _ = g.adjacency
    width = nbr.shape[1]
    V = g.n_vertices
    tanh = np.tanh(model.edge_parameters)
    P = np.zeros((len(states), len(states)))
    for i, (mask, h, t) in enumerate(states):
        # relocation half: only a closed worm moves
        if h == t:
            for s in range(V):
                P[i, index[(mask, s, s)]] += 0.5 / V
        else:
            P[i, i] += 0.5
        # head half: slot proposal, Metropolis on tanh
        for k in range(width):
            v = nbr[h, k]
            acc = 0.0
            if v >= 0:
                e = eid[h, k]
                acc = 1.0 if (mask >> e) & 1 else tanh[e]
                if acc > 0:
                    P[i, index[(mask ^ (1 << e), int(v), t)]] += 0.5 / width * acc
            P[i, i] += 0.5 / width * (1.0 - acc)
    return states, weights, P


def audit_detailed_balance(model: ModelSpec, sources=()) -> dict:
    """Max detailed-balance defect and row-sum defect of the exact worm kernel."""
    states, w, P = worm_transition_matrix(model, sources)
    pi = w / w.sum()
    flow = pi[:, None] * P
    return {"states": len(states), "balance_defect": float(np.abs(flow - flow.T).max()),
            "row_defect": float(np.abs(P.sum(axis=1) - 1).max()),
            "stationarity_defect": float(np.abs(pi @ P - pi).max())}


def exact_parity_marginal(model: ModelSpec, sources=()) -> dict[int, float]:
    """P[η = mask] under weight prod tanh^η restricted to ∂η = sources."""
    states, w = extended_states(model, sources)
    out: dict[int, float] = {}
    for (mask, h, t), wt in zip(states, w):
        if h == t and h == 0:
            out[mask] = out.get(mask, 0.0) + wt
    z = sum(out.values())
    return {m: v / z for m, v in out.items()}


def empirical_parity_marginal(model: ModelSpec, sources=(), samples: int = 20000, seed: int = 20261014,
                              chains: int = 8) -> tuple[dict[int, float], dict[int, float]]:
    """Sampled parity-state frequencies with batch standard errors."""
    g = model.graph
    E = g.n_edges
    if E > 12:
        raise SamplerError("audit limited to 12 edges")
    weights = 1 << np.arange(E)
    per = samples // chains
    freqs = []
    for c in range(chains):
        chain = WormChain(model, sources, stream(seed, "worm", c), burn_in=50)
        counts = np.zeros(1 << E)
        for _ in range(per):
            counts[int(chain.next_trace().astype(np.int64) @ weights)] += 1
        freqs.append(counts / per)
    freqs = np.array(freqs)
    mean = freqs.mean(axis=0)
    err = batch_stderr(freqs)
    return ({m: float(mean[m]) for m in np.flatnonzero(mean)},
            {m: float(err[m]) for m in range(1 << E)})
