"""Trace-measurable events, evaluated on every mask of a :class:`TraceSpace` at once."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .currents import ParityError, TraceSpace


class Event:
    """Predicate on the trace of a current (or of a sum of currents)."""

    def __call__(self, space: TraceSpace) -> np.ndarray:
        raise NotImplementedError

    def __and__(self, other: "Event") -> "Event":
        return AllOf((self, other))

    def __invert__(self) -> "Event":
        return Not(self)


@dataclass(frozen=True)
class Always(Event):
    def __call__(self, space):
        return np.ones(len(space.masks), dtype=bool)


@dataclass(frozen=True)
class Connected(Event):
    x: int
    y: int

    def __call__(self, space):
        return space.labels[:, self.x] == space.labels[:, self.y]


@dataclass(frozen=True)
class AllConnected(Event):
    """Every listed vertex lies in the cluster of the first one."""

    vertices: tuple[int, ...]

    def __call__(self, space):
        lab = space.labels
        ref = lab[:, self.vertices[0]]
        return np.all(lab[:, list(self.vertices)] == ref[:, None], axis=1)


@dataclass(frozen=True)
class ConnectedToSet(Event):
    x: int
    targets: tuple[int, ...]

    def __call__(self, space):
        lab = space.labels
        return np.any(lab[:, list(self.targets)] == lab[:, [self.x]], axis=1)


@dataclass(frozen=True)
class EdgeOpen(Event):
    edge: int

    def __call__(self, space):
        return space.bits[:, self.edge]


@dataclass(frozen=True)
class ComponentsAtMost(Event):
    k: int

    def __call__(self, space):
        return space.n_components <= self.k


@dataclass(frozen=True)
class Pairable(Event):
    """F_B: every trace component holds an even number of B-vertices."""

    B: tuple[int, ...]

    def __post_init__(self):
        if len(self.B) % 2:
            raise ParityError(f"pairing set {self.B} has odd size")

    def __call__(self, space):
        if not self.B:
            return np.ones(len(space.masks), dtype=bool)
        lab = space.labels[:, list(self.B)].astype(np.int64)
        parity = np.zeros(len(space.masks), dtype=np.int64)
        ok = np.ones(len(space.masks), dtype=bool)
        for v in range(space.n_vertices):
            parity = (lab == v).sum(axis=1) % 2
            ok &= parity == 0
        return ok


@dataclass(frozen=True)
class AllOf(Event):
    parts: tuple[Event, ...]

    def __call__(self, space):
        out = np.ones(len(space.masks), dtype=bool)
        for p in self.parts:
            out &= p(space)
        return out


@dataclass(frozen=True)
class Not(Event):
    inner: Event

    def __call__(self, space):
        return ~self.inner(space)


def standard_family(n_vertices: int, n_edges: int) -> list[Event]:
    """The fixed predicate family used by the exhaustive switching harness."""
    fam: list[Event] = [Always()]
    if n_vertices >= 2:
        fam.append(Connected(0, n_vertices - 1))
        fam.append(ConnectedToSet(0, tuple(range(max(1, n_vertices // 2), n_vertices))))
    if n_vertices >= 3:
        fam.append(AllConnected((0, 1, 2)))
        fam.append(Connected(1, 2) & ~Connected(0, 1))
    if n_edges:
        fam.append(EdgeOpen(0))
    fam.append(ComponentsAtMost(max(1, n_vertices // 2)))
    return fam
