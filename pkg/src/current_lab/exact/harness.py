"""Exhaustive and fuzzed instance families for the exact identity/inequality suites."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from ..lattice import Graph, ModelSpec
from ..streams import stream
from .checks import (
    ExactModel,
    Relation,
    coarse_switching_sides,
    lebowitz,
    ursell4_exact,
    verify_connectivity_identities,
    verify_disentangling,
    verify_normalization,
    verify_orgaf,
    verify_prop2b,
    verify_simon,
    verify_switching,
    verify_tree_bound,
)
from .currents import symmetric_difference
from .events import standard_family

SUITES = ("switching", "normalization", "orgaf", "ursell", "prop2b",
          "tree", "lebowitz", "connectivity", "simon", "disentangle", "coarse")
IDENTITY_SUITES = ("switching", "normalization", "orgaf", "ursell", "prop2b")
INEQUALITY_SUITES = ("tree", "lebowitz", "connectivity", "simon", "disentangle", "coarse")
COUPLING_LEVELS = (0.15, 0.6, 1.3)


@dataclass
class SuiteResult:
    name: str
    kind: str
    n_checks: int = 0
    n_violations: int = 0
    max_deviation: float = 0.0
    worst: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.n_violations == 0 and self.n_checks > 0

    def add(self, rel: Relation, instance: str) -> None:
        self.n_checks += 1
        dev = rel.deviation
        if not rel.holds:
            self.n_violations += 1
        if dev > self.max_deviation or not self.worst:
            self.max_deviation = max(dev, self.max_deviation)
            self.worst = {"instance": instance, "relation": rel.name, "lhs": rel.lhs,
                          "rhs": rel.rhs, **{k: _jsonable(v) for k, v in rel.context.items()}}

    def as_dict(self) -> dict:
        return {"suite": self.name, "kind": self.kind, "checks": self.n_checks,
                "violations": self.n_violations, "max_deviation": self.max_deviation,
                "worst": self.worst, "seconds": round(self.seconds, 3), "passed": self.passed}


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [int(a) for a in v]
    return int(v) if isinstance(v, (np.integer, int)) else v


# ---------------------------------------------------------------------------
# instance families


@dataclass
class Instance:
    label: str
    model: ModelSpec
    exhaustive: bool


def small_graphs(max_vertices: int = 4) -> Iterator[Graph]:
    """Every labelled simple graph on 2..max_vertices vertices with at least one edge."""
    for n in range(2, max_vertices + 1):
        pairs = list(itertools.combinations(range(n), 2))
        for r in range(1, len(pairs) + 1):
            for chosen in itertools.combinations(pairs, r):
                yield Graph.from_edges(n, chosen)


def exhaustive_instances(max_vertices: int = 4, seed: int = 20261014) -> Iterator[Instance]:
    rng = stream(seed, "fuzz", 0)
    for g in small_graphs(max_vertices):
        for level in COUPLING_LEVELS:
            yield Instance(f"v{g.n_vertices}e{g.edges.tolist()}t{level}",
                           ModelSpec(Graph(g.n_vertices, g.edges, np.full(g.n_edges, level)), 1.0), True)
        yield Instance(f"v{g.n_vertices}e{g.edges.tolist()}rand",
                       ModelSpec(Graph(g.n_vertices, g.edges, rng.uniform(0.05, 2.0, g.n_edges)), 1.0), True)


def fuzzed_instances(count: int = 1000, max_edges: int = 8, seed: int = 20261014) -> Iterator[Instance]:
    rng = stream(seed, "fuzz", 1)
    for i in range(count):
        n = int(rng.integers(3, 8))
        pairs = list(itertools.combinations(range(n), 2))
        m = int(rng.integers(n - 1, min(max_edges, len(pairs)) + 1))
        chosen = [pairs[k] for k in rng.choice(len(pairs), size=m, replace=False)]
        # occasionally relabel a spanning path in, so most instances are connected
        if rng.random() < 0.7:
            path = [(a, a + 1) for a in range(n - 1)]
            chosen = list(dict.fromkeys(path + chosen))[:max(max_edges, n - 1)]
        g = Graph.from_edges(n, chosen)
        yield Instance(f"fuzz{i}", ModelSpec(Graph(n, g.edges, rng.uniform(0.05, 2.0, g.n_edges)), 1.0), False)


# ---------------------------------------------------------------------------
# relation generators per suite


def _even_subsets(n):
    for r in range(0, n + 1, 2):
        yield from itertools.combinations(range(n), r)


def _pick(rng, items, k):
    items = list(items)
    if len(items) <= k:
        return items
    return [items[i] for i in rng.choice(len(items), size=k, replace=False)]


def relations_for(suite: str, inst: Instance, ctx: ExactModel, rng) -> Iterator[Relation]:
    g = inst.model.graph
    V = g.n_vertices
    full = inst.exhaustive
    S = ctx.S
    if suite == "switching":
        fam = standard_family(V, g.n_edges)
        pairs = list(itertools.product(_even_subsets(V), repeat=2))
        if not full:
            pairs = _pick(rng, pairs, 6)
        for A, B in pairs:
            for ev in fam:
                lhs, rhs = verify_switching(ctx, A, B, ev)
                yield Relation("switching", lhs, rhs, "identity", {"A": A, "B": B})
    elif suite == "normalization":
        subsets = list(_even_subsets(V)) if full else _pick(rng, _even_subsets(V), 6) + [()]
        for A in subsets:
            yield from verify_normalization(ctx, A)
    elif suite == "orgaf":
        pairs = list(itertools.product(_even_subsets(V), repeat=2))
        if not full:
            pairs = _pick(rng, pairs, 6)
        for A, B in pairs:
            if ctx.space.partition(symmetric_difference(A, B)) > 0:
                yield verify_orgaf(ctx, A, B)
    elif suite in ("ursell", "tree", "lebowitz"):
        quads = list(itertools.permutations(range(V), 4)) if V >= 4 else []
        if not full:
            quads = _pick(rng, quads, 4)
        for q in quads:
            if suite == "ursell":
                spin, curr = ursell4_exact(ctx, *q)
                yield Relation("ursell_dual", spin, curr, "identity", {"q": q})
            elif suite == "tree":
                lhs, rhs = verify_tree_bound(ctx, *q)
                yield Relation("tree", lhs, rhs, context={"q": q})
            else:
                yield lebowitz(ctx, *q)
    elif suite == "prop2b":
        triples = list(itertools.product(range(V), repeat=3))
        if not full:
            triples = _pick(rng, triples, 8)
        for o, x, u in triples:
            if o != x and S[o, x] > 0:
                yield verify_prop2b(ctx, o, x, u)
    elif suite == "connectivity":
        quads = list(itertools.product(range(V), repeat=4))
        if not full:
            quads = _pick(rng, quads, 6)
        for o, x, u, v in quads:
            if o == x:
                continue
            others = [w for w in range(V) if w != o]
            k = int(rng.integers(1, len(others) + 1))
            s_set = tuple(sorted(rng.choice(others, size=k, replace=False).tolist()))
            y = int(rng.integers(V))
            for rel in verify_connectivity_identities(ctx, x, u, v, origin=o, S_set=s_set, y=y):
                if rel.name != "prop2b":
                    yield rel
    elif suite == "simon":
        for o, y in itertools.permutations(range(V), 2):
            rest = [w for w in range(V) if w not in (o, y)]
            regions = [c for r in range(len(rest) + 1) for c in itertools.combinations(rest, r)]
            if not full:
                regions = _pick(rng, regions, 3)
            for extra in regions:
                lhs, rhs = verify_simon(ctx, (o, *extra), o, y)
                yield Relation("simon", lhs, rhs, context={"o": o, "y": y, "region": (o, *extra)})
    elif suite == "disentangle":
        quads = list(itertools.product(range(V), repeat=4))
        quads = _pick(rng, quads, 12 if full else 3)
        for q in quads:
            k = int(rng.integers(1, V + 1))
            s_set = tuple(sorted(rng.choice(V, size=k, replace=False).tolist()))
            o = int(rng.integers(V))
            yield from verify_disentangling(ctx, *q, s_set, origin=o)
    elif suite == "coarse":
        pairs = [(x, y) for x, y in itertools.permutations(range(V), 2) if S[x, y] > 0]
        pairs = _pick(rng, pairs, 6 if full else 2)
        for x, y in pairs:
            others = [w for w in range(V) if w != x]
            k = int(rng.integers(1, len(others) + 1))
            s_set = tuple(sorted(rng.choice(others, size=k, replace=False).tolist()))
            lhs, rhs = coarse_switching_sides(ctx, x, y, s_set)
            yield Relation("coarse_switching", lhs, rhs, context={"x": x, "y": y, "S": s_set})
    else:
        raise ValueError(f"unknown suite {suite!r}")


def run_suites(suites=SUITES, max_vertices: int = 4, fuzz: int = 1000, max_edges: int = 8,
               seed: int = 20261014, progress: Callable[[str], None] | None = None) -> dict[str, SuiteResult]:
    """Evaluate the named suites on the exhaustive and fuzzed families."""
    results = {s: SuiteResult(s, "identity" if s in IDENTITY_SUITES else "inequality") for s in suites}
    rng = stream(seed, "fuzz", 2)
    families = [exhaustive_instances(max_vertices, seed), fuzzed_instances(fuzz, max_edges, seed)]
    for family in families:
        for inst in family:
            if inst.model.graph.n_edges > max_edges:
                continue
            ctx = ExactModel(inst.model)
            for s in suites:
                t0 = time.perf_counter()
                for rel in relations_for(s, inst, ctx, rng):
                    results[s].add(rel, inst.label)
                results[s].seconds += time.perf_counter() - t0
    if progress:
        for r in results.values():
            progress(f"{r.name}: {r.n_checks} checks, {r.n_violations} violations")
    return results
