"""Diagrammatic quantities computed from two-point tables.

Boxes and annuli use the sup norm, Λ_L = {|x| <= L}. Every function accepts
exact tables (no batches) and Monte Carlo tables; for the latter errors are
jackknife estimates over the table's batches.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .lattice import GeometryError
from .stats import double_factorial_odd, jackknife, within_sigma
from .streams import stream
from .tables import TwoPointTable

DEFAULT_C_SMALL = 0.1
DEFAULT_C_LARGE = 10.0


def with_error(table: TwoPointTable, func: Callable[[np.ndarray], float]) -> tuple[float, float]:
    """func(values) and its jackknife error over the table batches (0 for exact tables)."""
    if table.batches is None or len(table.batches) < 2:
        return float(func(table.values)), 0.0
    value, err = jackknife(table.batches, func)
    return float(value), float(err)


def _sup_norm_grid(table: TwoPointTable) -> np.ndarray:
    return table.torus.site_sup_norm.reshape(table.shape)


def _check_radius(table: TwoPointTable, L: int) -> None:
    if not 0 <= L <= table.half_side:
        raise GeometryError(f"radius {L} exceeds the table radius {table.half_side}")


# ---------------------------------------------------------------------------
# truncated sums


def bubble(table: TwoPointTable, L: int, values: np.ndarray | None = None) -> float:
    """B_L = Σ_{x∈Λ_L} S(x)²."""
    _check_radius(table, L)
    v = table.values if values is None else values
    return float((v[_sup_norm_grid(table) <= L] ** 2).sum())


def chi(table: TwoPointTable, L: int, values: np.ndarray | None = None) -> float:
    """χ_L = Σ_{x∈Λ_L} S(x)."""
    _check_radius(table, L)
    v = table.values if values is None else values
    return float(v[_sup_norm_grid(table) <= L].sum())


def _pair_counts(table: TwoPointTable, L: int) -> np.ndarray:
    """#{(x, y) ∈ Λ_L²: x - y = z} for every torus displacement z."""
    box = (_sup_norm_grid(table) <= L).astype(float)
    f = np.fft.fftn(box)
    return np.rint(np.fft.ifftn(f * np.conj(f)).real)


def sigma(table: TwoPointTable, L: int, values: np.ndarray | None = None) -> float:
    """Σ_L = Σ_{x,y∈Λ_L} S(x - y) = ⟨(Σ_{Λ_L} τ)²⟩."""
    _check_radius(table, L)
    v = table.values if values is None else values
    return float((_pair_counts(table, L) * v).sum())


@dataclass
class DiagramReport:
    radii: list[int]
    bubble: list[float]
    bubble_err: list[float]
    chi: list[float]
    chi_err: list[float]
    sigma: list[float]
    sigma_err: list[float]
    monotone: bool
    table_id: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def diagram_report(table: TwoPointTable, table_id: str = "") -> DiagramReport:
    """B_L, χ_L, Σ_L for L = 0..half side; checks monotonicity in L exactly."""
    radii = list(range(table.half_side + 1))
    cols = {}
    for name, fn in (("bubble", bubble), ("chi", chi), ("sigma", sigma)):
        pairs = [with_error(table, lambda v, L=L: fn(table, L, v)) for L in radii]
        cols[name] = [p[0] for p in pairs]
        cols[name + "_err"] = [p[1] for p in pairs]
    mono = all(np.all(np.diff(cols[k]) >= -1e-12 * max(1.0, max(cols[k]))) for k in ("bubble", "chi"))
    return DiagramReport(radii, monotone=bool(mono), table_id=table_id, **cols)


# ---------------------------------------------------------------------------
# tree diagrams


def _shifted(table: TwoPointTable, x, values=None) -> np.ndarray:
    """Array over u of S(u - x)."""
    v = table.values if values is None else values
    return np.roll(v, tuple(int(a) for a in np.asarray(x)), axis=tuple(range(table.d)))


def tree_sum(table: TwoPointTable, x, y, z, t, values: np.ndarray | None = None) -> float:
    """2 Σ_u S(u-x) S(u-y) S(u-z) S(u-t) over the torus."""
    prod = np.ones(table.shape)
    for p in (x, y, z, t):
        prod = prod * _shifted(table, p, values)
    return float(2.0 * prod.sum())


def tree_shell(table: TwoPointTable, x, y, z, t) -> float:
    """Contribution to the tree sum from u on the outermost shell around x (truncation proxy)."""
    prod = np.ones(table.shape)
    for p in (x, y, z, t):
        prod = prod * _shifted(table, p)
    shell = _shifted(table, x, _sup_norm_grid(table).astype(float)) == table.half_side
    return float(2.0 * prod[shell].sum())


def min_distance(points, shape) -> int:
    """Smallest pairwise sup distance (minimal image) among points."""
    pts = np.asarray(points, dtype=np.int64)
    best = None
    for a, b in itertools.combinations(range(len(pts)), 2):
        d = np.mod(pts[a] - pts[b], shape)
        d = np.minimum(d, np.asarray(shape) - d).max()
        best = d if best is None else min(best, d)
    return int(best)


@dataclass
class RatioRow:
    points: list
    u4: float
    u4_err: float
    tree: float
    tree_err: float
    ratio: float
    spacing: int
    bubble_used: float
    improvement_reference: float  # B_L^{-c}
    holds: bool
    degenerate: bool
    flags: list[str] = field(default_factory=list)


def improved_ratio_report(table: TwoPointTable, quadruples, u4_values, c: float = DEFAULT_C_SMALL,
                          n_sigma: float = 3.0) -> list[RatioRow]:
    """Per quadruple: |U₄|, tree sum, ratio, and B_L^{-c} at the quadruple's spacing.

    Only |U₄| <= tree is asserted (within n_sigma for Monte Carlo inputs).
    """
    rows = []
    for pts, (u4, u4_err) in zip(quadruples, u4_values):
        pts = [np.asarray(p, dtype=np.int64) for p in pts]
        tree, tree_err = with_error(table, lambda v: tree_sum(table, *pts, values=v))
        spacing = min(min_distance(pts, table.shape), table.half_side)
        B = bubble(table, spacing)
        flags = []
        if tree == 0.0:
            degenerate = True
            ratio = 0.0
            if abs(u4) > n_sigma * u4_err + 1e-14:
                flags.append("inconsistent: zero tree sum with non-zero U4")
        else:
            degenerate = False
            ratio = float(abs(u4) / tree)
        holds = bool(within_sigma(abs(u4), tree, math.hypot(u4_err, tree_err), n_sigma))
        rows.append(RatioRow([p.tolist() for p in pts], float(u4), float(u4_err), tree, tree_err, ratio,
                             spacing, B, B ** (-c) if B > 0 else 0.0, holds and not flags, degenerate, flags))
    return rows


# ---------------------------------------------------------------------------
# scales


@dataclass
class ScaleSequence:
    D: float
    lengths: list[int]  # ℓ_0 = 0, ℓ_1, ..., ℓ_K
    bubbles: list[float]

    @property
    def K(self) -> int:
        return len(self.lengths) - 1

    def verify(self) -> bool:
        b = self.bubbles
        return all(b[k + 1] >= self.D * b[k] * (1 - 1e-12) for k in range(self.K)) and \
            all(self.lengths[k + 1] > self.lengths[k] for k in range(self.K))

    def covering_lengths(self) -> list[int]:
        """Positive lengths thinned greedily so that ℓ_1 >= 1 and ℓ_{k+1} >= 2 ℓ_k."""
        out: list[int] = []
        for ell in self.lengths:
            if ell >= 1 and (not out or ell >= 2 * out[-1]):
                out.append(int(ell))
        return out

    def as_dict(self) -> dict:
        return {"D": self.D, "lengths": self.lengths, "bubbles": self.bubbles, "K": self.K}


def scale_sequence(table: TwoPointTable, D: float = 2.0) -> ScaleSequence:
    """ℓ_0 = 0 and ℓ_{k+1} = min{ℓ : B_ℓ >= D B_{ℓ_k}} within the table radius."""
    if not D > 1:
        raise ValueError("D must exceed 1")
    radii = range(table.half_side + 1)
    B = [bubble(table, L) for L in radii]
    lengths, bubbles = [0], [B[0]]
    while True:
        nxt = next((L for L in radii if L > lengths[-1] and B[L] >= D * bubbles[-1]), None)
        if nxt is None:
            break
        lengths.append(nxt)
        bubbles.append(B[nxt])
    return ScaleSequence(float(D), lengths, bubbles)


def _orbit_reps(table: TwoPointTable, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Sorted absolute coordinates (one per symmetry orbit) with lo <= |x| <= hi, and their S."""
    h = table.half_side
    reps = [r for r in itertools.combinations_with_replacement(range(h + 1), table.d)
            if lo <= max(r) <= hi]
    arr = np.array(reps, dtype=np.int64).reshape(-1, table.d)
    return arr, table.S(arr)


@dataclass
class ScaleFlags:
    k: int
    n: int
    P1: bool
    P2: bool
    P3: bool
    P4: bool
    P3_vacuous: bool

    @property
    def regular(self) -> bool:
        return self.P1 and self.P2 and self.P3 and self.P4


@dataclass
class RegularScaleReport:
    c: float
    C: float
    scales: list[ScaleFlags]
    count: int
    reference: float  # c log2(N/n) over the tested range
    implication_ok: bool  # P2(C) ⇒ P1(1 + 16C) on every tested scale

    def as_dict(self) -> dict:
        return {"c": self.c, "C": self.C, "count": self.count, "reference": self.reference,
                "implication_ok": self.implication_ok,
                "scales": [dict(s.__dict__, regular=s.regular) for s in self.scales]}


def _p1(S_ann, C):
    return bool(S_ann.max() <= C * S_ann.min())


def _p2(reps, S_ann, C):
    """|S(x) - S(y)| <= C |x - y| / |x| S(x) for every pair of orbits.

    The closest pair of points in two orbits (sorted absolute coordinate
    vectors a, b) is at sup distance max_i |a_i - b_i|.
    """
    dist = np.abs(reps[:, None, :] - reps[None, :, :]).max(axis=-1)
    norm = reps.max(axis=1)[:, None]
    lhs = np.abs(S_ann[:, None] - S_ann[None, :])
    rhs = C * dist / norm * S_ann[:, None]
    return bool(np.all(lhs <= rhs * (1 + 1e-12) + 1e-300))


def regular_scales(table: TwoPointTable, c: float = DEFAULT_C_SMALL, C: float = DEFAULT_C_LARGE) -> RegularScaleReport:
    """Flags P1-P4 on every dyadic scale n = 2^k whose annulus Ann(n/2, 4n) fits in the table.

    P3 compares S on Λ_n with S outside Λ_{Cn}; when Cn exceeds the table
    radius that set is empty and P3 holds vacuously (flagged).
    """
    h = table.half_side
    out = []
    implication = True
    k = 0
    while 4 * 2**k <= h:
        n = 2**k
        reps, S_ann = _orbit_reps(table, n / 2, 4 * n)
        p1 = _p1(S_ann, C)
        p2 = _p2(reps, S_ann, C)
        if p2 and not _p1(S_ann, 1 + 16 * C):
            implication = False
        inner = table.values[_sup_norm_grid(table) <= n].min()
        outside = _sup_norm_grid(table) > C * n
        vacuous = not outside.any()
        p3 = True if vacuous else bool(table.values[outside].max() <= 0.5 * inner)
        p4 = chi(table, 2 * n) >= (1 + c) * chi(table, n) if 2 * n <= h else False
        out.append(ScaleFlags(k, n, p1, p2, p3, bool(p4), vacuous))
        k += 1
    count = sum(s.regular for s in out)
    ref = c * math.log2(out[-1].n / out[0].n) if len(out) > 1 else 0.0
    return RegularScaleReport(c, C, out, count, ref, implication)


# ---------------------------------------------------------------------------
# Gaussianity bound and renormalized coupling


def _tree_kernel(table: TwoPointTable, pts: np.ndarray) -> float:
    prod = np.ones(table.shape)
    for p in pts:
        prod = prod * _shifted(table, p)
    return float(prod.sum())


def gaussianity_bound(table: TwoPointTable, L: int, r: float = 1.0, c: float = DEFAULT_C_SMALL,
                      samples: int = 4000, seed: int = 20261014, exact_limit: int = 200_000) -> tuple[float, float, str]:
    """S(L, r, β) = Σ_{x, x_i ∈ Λ_{rL}} 2 Π S(x - x_i) / (Σ_L² B_{L(x_1..x_4)}^c).

    Enumerated exactly when the number of quadruples is at most
    ``exact_limit``; otherwise estimated by uniform sampling of quadruples
    with a fixed stream. Returns (value, stderr, method).
    """
    R = int(math.floor(r * L))
    _check_radius(table, R)
    _check_radius(table, L)
    tor = table.torus
    box = tor.coords(tor.box_sites(R))
    sig = sigma(table, L)
    Bs = [bubble(table, m) for m in range(table.half_side + 1)]
    n_box = len(box)

    def term(idx):
        pts = box[list(idx)]
        m = min(min_distance(pts, table.shape), table.half_side)
        return 2.0 * _tree_kernel(table, pts) / (sig**2 * Bs[m] ** c)

    if n_box**4 <= exact_limit:
        total = math.fsum(term(q) for q in itertools.product(range(n_box), repeat=4))
        return total, 0.0, "exact"
    rng = stream(seed, "diagrams", 0)
    draws = np.array([term(q) for q in rng.integers(0, n_box, size=(samples, 4))])
    scale = float(n_box) ** 4
    return float(scale * draws.mean()), float(scale * draws.std(ddof=1) / math.sqrt(samples)), "sampled"


@dataclass
class GaussianityGap:
    L: int
    r: float
    c: float
    bound: float
    bound_err: float
    method: str
    measured_gap: float
    measured_gap_err: float
    normalized_gap: float
    sigma: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def gaussianity_gap(table: TwoPointTable, smeared, L: int, r: float = 1.0, c: float = DEFAULT_C_SMALL,
                    **kw) -> GaussianityGap:
    """Bound side S(L, r, β) from the table next to the measured Wick gap of T_{f,L}."""
    if smeared is None or not math.isfinite(getattr(smeared, "sigma", float("nan"))):
        raise ValueError("smeared moments with Σ_L are required")
    bound, err, method = gaussianity_bound(table, L, r, c, **kw)
    gap = smeared.gaps[0] if smeared.gaps else 0.0
    gap_err = smeared.gap_errors[0] if smeared.gap_errors else 0.0
    return GaussianityGap(L, r, c, bound, err, method, gap, gap_err, smeared.normalized_gap, smeared.sigma)


@dataclass
class CouplingReport:
    g: float
    g_err: float
    xi: float
    chi: float
    abs_u4_sum: float
    truncation_radius: int
    flags: list[str]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def renormalized_coupling(table: TwoPointTable, abs_u4_sum: float, abs_u4_sum_err: float = 0.0,
                          xi: float | None = None, chi_value: float | None = None) -> CouplingReport:
    """g(β) = Σ_{x,y,z} |U₄(0,x,y,z)| / (ξ⁴ χ²), sums over the whole torus."""
    xi = table.xi if xi is None else xi
    chi_value = table.susceptibility() if chi_value is None else chi_value
    flags = []
    if not math.isfinite(xi) or xi <= 0:
        return CouplingReport(float("nan"), float("nan"), xi, chi_value, abs_u4_sum, table.half_side,
                              ["xi-unreliable"])
    if xi > table.L / 4:
        flags.append("xi-unreliable")
    if abs_u4_sum == 0:
        return CouplingReport(0.0, 0.0, xi, chi_value, 0.0, table.half_side, flags)
    g = abs_u4_sum / (xi**4 * chi_value**2)
    return CouplingReport(g, abs(g) * abs_u4_sum_err / abs_u4_sum, xi, chi_value, abs_u4_sum, table.half_side, flags)


# ---------------------------------------------------------------------------
# Wick pairings


def pairings(items: Sequence) -> Iterator[list[tuple]]:
    """All perfect matchings of an even-length sequence, first element paired first."""
    items = list(items)
    if not items:
        yield []
        return
    if len(items) % 2:
        raise ValueError("odd number of points has no pairing")
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in pairings(remaining):
            yield [(first, partner)] + tail


def pairings_bruteforce(n_points: int) -> set[frozenset]:
    """Distinct matchings of range(n_points) from all permutations (oracle for small n)."""
    found = set()
    for perm in itertools.permutations(range(n_points)):
        found.add(frozenset(frozenset(perm[i:i + 2]) for i in range(0, n_points, 2)))
    return found


def wick_sum(table: TwoPointTable, points) -> float:
    """𝒢_n(x_1..x_2n) = Σ over pairings of Π S(x_i - x_j)."""
    pts = [np.asarray(p, dtype=np.int64) for p in points]
    total = []
    for pairing in pairings(range(len(pts))):
        total.append(math.prod(float(table.S(pts[i] - pts[j])) for i, j in pairing))
    return math.fsum(total)


def wick_count(n: int) -> int:
    return double_factorial_odd(n)


def exact_smeared_moments(model, smear) -> dict:
    """Exact ⟨T^k⟩ of T = Σ_x f(x/ℓ) φ_x / Σ_ℓ^{1/2} and the normalized Wick gap on a small torus."""
    from .exact.spins import SpinOracle

    oracle = SpinOracle(model)
    sigma_l = float(oracle.linear_moments(smear.box().ravel(), 2)[2])
    raw = oracle.linear_moments(smear.profile.ravel(), smear.max_order)
    moments = [float(raw[k] / sigma_l ** (k / 2)) for k in range(1, smear.max_order + 1)]
    m2, m4 = moments[1], moments[3]
    return {"sigma": sigma_l, "moments": moments, "normalized_gap": abs(m4 - 3 * m2**2) / m2**2}
