"""Graphs, periodic tori, box/annulus geometry and model specifications.

Everything here is immutable after construction so that the exact engines,
the samplers and the diagram code can share the same objects freely.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for out-of-range radii, sides, dimensions or malformed graphs."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with non-negative edge couplings."""

    n_vertices: int
    edges: np.ndarray  # (E, 2) int64, u < v
    couplings: np.ndarray  # (E,) float64

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        couplings = np.asarray(self.couplings, dtype=np.float64).reshape(-1)
        if self.n_vertices < 1:
            raise GeometryError("graph needs at least one vertex")
        if len(edges) != len(couplings):
            raise GeometryError("one coupling per edge is required")
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n_vertices:
                raise GeometryError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GeometryError("self-loops are not allowed")
        if not np.all(np.isfinite(couplings)) or np.any(couplings < 0):
            raise GeometryError("couplings must be finite and non-negative")
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * self.n_vertices + edges[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise GeometryError("at most one edge per unordered pair")
        edges.setflags(write=False)
        couplings.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(cls, n_vertices: int, edge_list: Iterable[Sequence[float]]) -> "Graph":
        """Build from ``(u, v)`` or ``(u, v, J)`` tuples (J defaults to 1)."""
        pairs, js = [], []
        for item in edge_list:
            u, v = int(item[0]), int(item[1])
            pairs.append((u, v))
            js.append(float(item[2]) if len(item) > 2 else 1.0)
        return cls(n_vertices, np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(js))

    def coupling_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n_vertices, self.n_vertices))
        mat[self.edges[:, 0], self.edges[:, 1]] = self.couplings
        mat[self.edges[:, 1], self.edges[:, 0]] = self.couplings
        return mat

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Padded adjacency ``(neighbors, edge_ids, degree)``; padding is -1."""
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        width = max(int(deg.max()) if len(deg) else 0, 1)
        nbr = -np.ones((self.n_vertices, width), dtype=np.int64)
        eid = -np.ones((self.n_vertices, width), dtype=np.int64)
        fill = np.zeros(self.n_vertices, dtype=np.int64)
        for e, (u, v) in enumerate(self.edges):
            nbr[u, fill[u]], eid[u, fill[u]] = v, e
            fill[u] += 1
            nbr[v, fill[v]], eid[v, fill[v]] = u, e
            fill[v] += 1
        for arr in (nbr, eid, deg):
            arr.setflags(write=False)
        return nbr, eid, deg

    def is_connected(self) -> bool:
        labels = component_labels(self.n_vertices, self.edges)
        return bool(np.all(labels == labels[0]))

    def short_cycles(self, max_length: int = 4) -> np.ndarray:
        """Edge-index lists of all triangles and (chordless or not) 4-cycles.

        Intended for small graphs; tori use :meth:`Torus.plaquettes`. Rows are
        padded with -1 to width 4.
        """
        nbr = [set() for _ in range(self.n_vertices)]
        index = {}
        for e, (u, v) in enumerate(self.edges):
            nbr[u].add(int(v))
            nbr[v].add(int(u))
            index[(int(u), int(v))] = index[(int(v), int(u))] = e
        found = set()
        for cyc in _cycles_up_to(nbr, max_length):
            es = tuple(sorted(index[(cyc[i], cyc[(i + 1) % len(cyc)])] for i in range(len(cyc))))
            found.add(es)
        rows = [list(es) + [-1] * (4 - len(es)) for es in sorted(found)]
        return np.array(rows, dtype=np.int64).reshape(-1, 4)


def _cycles_up_to(nbr, max_length):
    n = len(nbr)
    for start in range(n):
        stack = [(start, [start])]
        while stack:
            v, path = stack.pop()
            for w in nbr[v]:
                if w == start and len(path) >= 3:
                    yield path
                elif w > start and w not in path and len(path) < max_length:
                    stack.append((w, path + [w]))


def component_labels(n_vertices: int, edges: np.ndarray) -> np.ndarray:
    """Smallest-vertex label of the connected component of every vertex."""
    parent = list(range(n_vertices))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in np.asarray(edges).reshape(-1, 2):
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return np.array([find(a) for a in range(n_vertices)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Torus:
    """Periodic hypercubic lattice (Z/L)^d with uniform nearest-neighbour coupling."""

    d: int
    shape: tuple[int, ...]
    J: float = 1.0

    def __post_init__(self):
        if not 1 <= self.d <= 4:
            raise GeometryError(f"dimension must be in 1..4, got {self.d}")
        if len(self.shape) != self.d:
            raise GeometryError("one side length per axis")
        if any(side < 2 for side in self.shape):
            raise GeometryError("side length must be at least 2")
        if not (math.isfinite(self.J) and self.J >= 0):
            raise GeometryError("coupling must be finite and non-negative")

    @property
    def L(self) -> int:
        if len(set(self.shape)) != 1:
            raise GeometryError("non-cubic torus has no single side length")
        return self.shape[0]

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def coupling_sum(self) -> float:
        """|J|, the total coupling seen from one site (2dJ)."""
        return 2 * self.d * self.J

    def index(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        return np.ravel_multi_index(tuple(np.mod(coords, self.shape).T), self.shape)

    def coords(self, index=None) -> np.ndarray:
        """Coordinates of the given site indices (all sites by default)."""
        if index is None:
            index = np.arange(self.n_sites)
        return np.stack(np.unravel_index(np.asarray(index), self.shape), axis=-1)

    @cached_property
    def graph(self) -> Graph:
        sites = np.arange(self.n_sites)
        xs = self.coords(sites)
        pair_j: dict[tuple[int, int], float] = {}
        for axis in range(self.d):
            step = np.zeros(self.d, dtype=np.int64)
            step[axis] = 1
            nxt = self.index(xs + step)
            for u, v in zip(sites, nxt):
                key = (min(u, v), max(u, v))
                # on a side-2 axis both wrap edges join the same pair
                pair_j[key] = pair_j.get(key, 0.0) + self.J
        keys = sorted(pair_j)
        return Graph(self.n_sites, np.array(keys, dtype=np.int64).reshape(-1, 2),
                     np.array([pair_j[k] for k in keys]))

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    def minimal_image(self, disp) -> np.ndarray:
        """Componentwise minimal-image representative in (-L/2, L/2]."""
        disp = np.mod(np.asarray(disp, dtype=np.int64), self.shape)
        half = np.array(self.shape) // 2
        return np.where(disp > half, disp - np.array(self.shape), disp)

    def sup_norm(self, disp) -> np.ndarray:
        return np.abs(self.minimal_image(disp)).max(axis=-1)

    def l1_norm(self, disp) -> np.ndarray:
        return np.abs(self.minimal_image(disp)).sum(axis=-1)

    @cached_property
    def site_sup_norm(self) -> np.ndarray:
        """|x| for every site index, relative to the origin."""
        out = self.sup_norm(self.coords())
        out.setflags(write=False)
        return out

    @property
    def half_side(self) -> int:
        return min(self.shape) // 2

    def box_sites(self, n: int, center=None) -> np.ndarray:
        return self.annulus_sites(0, n, center)

    def annulus_sites(self, k: int, n: int, center=None) -> np.ndarray:
        """Indices of sites with k <= |x - center| <= n."""
        if not 0 <= k <= n <= self.half_side:
            raise GeometryError(f"radii ({k}, {n}) must satisfy 0 <= k <= n <= {self.half_side}")
        if center is None:
            norm = self.site_sup_norm
        else:
            norm = self.sup_norm(self.coords() - np.asarray(center))
        return np.flatnonzero((norm >= k) & (norm <= n))

    def boundary_sites(self, n: int, center=None) -> np.ndarray:
        return self.annulus_sites(n, n, center)

    def plaquettes(self) -> np.ndarray:
        """Edge indices of all elementary squares (empty when any side is 2)."""
        if self.d < 2 or min(self.shape) < 3:
            return np.zeros((0, 4), dtype=np.int64)
        g = self.graph
        lookup = {(int(u), int(v)): e for e, (u, v) in enumerate(g.edges)}

        def eid(a, b):
            return lookup[(min(a, b), max(a, b))]

        xs = self.coords()
        rows = []
        for a1, a2 in itertools.combinations(range(self.d), 2):
            e1 = np.zeros(self.d, dtype=np.int64)
            e2 = np.zeros(self.d, dtype=np.int64)
            e1[a1] = 1
            e2[a2] = 1
            s0 = self.index(xs)
            s1 = self.index(xs + e1)
            s2 = self.index(xs + e2)
            s12 = self.index(xs + e1 + e2)
            for p, q, r, s in zip(s0, s1, s12, s2):
                rows.append((eid(p, q), eid(q, r), eid(r, s), eid(s, p)))
        return np.array(rows, dtype=np.int64)


def make_torus(d: int, L: int | Sequence[int], J: float = 1.0) -> Torus:
    shape = (int(L),) * int(d) if np.isscalar(L) else tuple(int(s) for s in L)
    return Torus(int(d), shape, float(J))


# ---------------------------------------------------------------------------
# annular covering


def check_length_sequence(lengths: Sequence[int]) -> np.ndarray:
    """Validate an admissible length sequence: l_1 >= 1 and l_{k+1} >= 2 l_k."""
    seq = np.asarray(lengths, dtype=np.int64)
    if seq.ndim != 1 or len(seq) == 0:
        raise GeometryError("length sequence must be a non-empty 1-d sequence")
    if seq[0] < 1 or np.any(seq[1:] < 2 * seq[:-1]):
        raise GeometryError(f"non-admissible length sequence {seq.tolist()}")
    return seq


COVER_CHUNK = 1 << 20  # distance entries per block


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 1)
    return pts


def _sup_distances(points, origins, shape=None) -> np.ndarray:
    diff = origins[:, None, :] - points[None, :, :]
    if shape is not None:
        shape = np.asarray(shape)
        diff = np.mod(diff, shape)
        diff = np.where(diff > shape // 2, diff - shape, diff)
    return np.abs(diff).max(axis=-1)


def annular_cover_counts(points, lengths: Sequence[int], K: int, shape=None) -> np.ndarray:
    """M_u for every u in ``points`` (see :func:`annular_cover_count`)."""
    seq = check_length_sequence(lengths)
    if not 0 <= K <= len(seq) - 1:
        raise GeometryError(f"K={K} needs {K + 1} lengths, got {len(seq)}")
    pts = _as_points(points)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    inner = seq[:K][:, None, None]
    outer = seq[1:K + 1][:, None, None]
    out = np.zeros(len(pts), dtype=np.int64)
    step = max(1, COVER_CHUNK // len(pts))
    for lo in range(0, len(pts), step):
        dist = _sup_distances(pts, pts[lo:lo + step], shape)
        hit = ((dist[None] >= inner) & (dist[None] <= outer)).any(axis=2)
        out[lo:lo + step] = hit.sum(axis=0)
    return out


def annular_cover_counts_grid(indicator: np.ndarray, lengths: Sequence[int], K: int) -> np.ndarray:
    """M_u on a torus for a set given by its indicator grid, at every site.

    Counts points at sup distance <= r by FFT box convolution, so an annulus
    [l_k, l_{k+1}] is met iff N_{l_{k+1}} - N_{l_k - 1} > 0.
    """
    seq = check_length_sequence(lengths)
    if not 0 <= K <= len(seq) - 1:
        raise GeometryError(f"K={K} needs {K + 1} lengths, got {len(seq)}")
    grid = np.asarray(indicator, dtype=float)
    shape = grid.shape
    if seq[K] > min(shape) // 2:
        raise GeometryError("annuli exceed the torus half side")
    sup = Torus(len(shape), tuple(shape)).site_sup_norm.reshape(shape)
    f = np.fft.fftn(grid)

    def within(r):
        box = np.fft.fftn((sup <= r).astype(float))
        return np.rint(np.fft.ifftn(f * box).real)

    out = np.zeros(shape, dtype=np.int64)
    for k in range(K):
        out += (within(seq[k + 1]) - within(seq[k] - 1)) > 0
    return out


def annular_cover_count(points, u, lengths: Sequence[int], K: int, shape=None) -> int:
    """Number of k in 1..K such that the set meets u + Ann(l_k, l_{k+1}).

    ``lengths`` lists l_1, l_2, ..., and must contain at least K + 1 entries.
    Coordinates live on Z^d unless a torus ``shape`` is given, in which case
    distances use the minimal image.
    """
    seq = check_length_sequence(lengths)
    if not 0 <= K <= len(seq) - 1:
        raise GeometryError(f"K={K} needs {K + 1} lengths, got {len(seq)}")
    pts = _as_points(points)
    if len(pts) == 0:
        return 0
    origin = np.asarray(u, dtype=np.int64).reshape(1, -1)
    dist = _sup_distances(pts, origin, shape)[0]
    count = 0
    for k in range(K):
        if np.any((dist >= seq[k]) & (dist <= seq[k + 1])):
            count += 1
    return count


def covering_bound_check(points, lengths: Sequence[int], K: int, shape=None) -> bool:
    """True iff |X| >= 2 ** (min_u M_u(X) / 5)."""
    pts = _as_points(points)
    if len(pts) == 0:
        check_length_sequence(lengths)
        return True
    # duplicates would inflate |X|
    pts = np.unique(pts, axis=0)
    counts = annular_cover_counts(pts, lengths, K, shape)
    return bool(len(pts) >= 2.0 ** (counts.min() / 5.0))


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class Ising:
    """Spins in {-1, +1} with the uniform a-priori measure."""

    @property
    def label(self) -> str:
        return "ising"


@dataclass(frozen=True)
class GSBlock:
    """Mean-field block of N Ising spins calibrated to e^{-lam phi^4 + b phi^2}."""

    N: int
    lam: float
    b: float

    def __post_init__(self):
        if self.N < 1:
            raise GeometryError("block size must be at least 1")
        if self.lam < 0 or (self.lam == 0 and self.b >= 0):
            raise GeometryError("site measure is not normalizable")

    @property
    def label(self) -> str:
        return f"gs:{self.N},{self.lam:g},{self.b:g}"


@dataclass(frozen=True)
class ExplicitGS:
    """Block variable sum_n w_n sigma_n of Ising constituents coupled by K_{nm}."""

    weights: tuple[float, ...]
    inner_couplings: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mat = np.asarray(self.inner_couplings, dtype=float)
        if mat.ndim != 2 or mat.shape != (len(w), len(w)):
            raise GeometryError("inner couplings must be a square matrix matching the weights")
        if not np.allclose(mat, mat.T) or np.any(mat < 0):
            raise GeometryError("inner couplings must be symmetric and non-negative")
        if np.any(w <= 0):
            raise GeometryError("constituent weights must be positive")
        if len(w) > 20:
            raise GeometryError("explicit blocks are enumerated; at most 20 constituents")

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def label(self) -> str:
        return f"explicit-gs:{self.N}"


SiteMeasure = Ising | GSBlock | ExplicitGS


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A graph (or torus), an inverse temperature and a single-site measure."""

    lattice: Graph | Torus
    beta: float
    site: SiteMeasure = field(default_factory=Ising)

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise GeometryError("beta must be finite and non-negative")

    @property
    def graph(self) -> Graph:
        return self.lattice.graph if isinstance(self.lattice, Torus) else self.lattice

    @property
    def torus(self) -> Torus | None:
        return self.lattice if isinstance(self.lattice, Torus) else None

    @property
    def edge_parameters(self) -> np.ndarray:
        """t_e = beta * J_e."""
        return self.beta * self.graph.couplings

    @property
    def is_ising(self) -> bool:
        return isinstance(self.site, Ising)

    def with_beta(self, beta: float) -> "ModelSpec":
        return ModelSpec(self.lattice, beta, self.site)


# ---------------------------------------------------------------------------
# edge-list files


def read_edge_list(path: str | Path) -> Graph:
    """Parse ``u v J`` lines; ``#`` starts a comment; vertices are 0-based."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GeometryError(f"{path}:{lineno}: expected 'u v J'")
        rows.append((int(parts[0]), int(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0))
    if not rows:
        raise GeometryError(f"{path}: no edges")
    n = max(max(u, v) for u, v, _ in rows) + 1
    return Graph.from_edges(n, rows)


def write_edge_list(graph: Graph, path: str | Path) -> None:
    lines = [f"{u} {v} {j!r}" for (u, v), j in zip(graph.edges.tolist(), graph.couplings.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
