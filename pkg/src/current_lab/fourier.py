"""Momentum-space checks on two-point tables.

All comparisons of Monte Carlo quantities carry a batch error and pass when
the violation stays within ``n_sigma`` standard errors. Exact tables are
checked at a relative tolerance of 1e-12 instead.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .diagrams import chi, with_error
from .stats import batch_stderr
from .tables import TwoPointTable, correlation_length_second_moment

EXACT_TOL = 1e-12
SUM_RULE_TOL = 1e-10
DEFAULT_SLIDING_C = 10.0
DEFAULT_GRADIENT_C = 4.0


def _violates(lhs, rhs, err, n_sigma: float) -> np.ndarray:
    """lhs <= rhs fails beyond n_sigma·err (and beyond rounding)."""
    lhs, rhs, err = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (lhs, rhs, err)))
    slack = EXACT_TOL * np.maximum(np.abs(rhs), 1.0)
    return lhs - rhs > n_sigma * err + slack


def _diff_err(table: TwoPointTable, xs, ys) -> np.ndarray:
    """Standard error of S(x) - S(y) from paired batches (0 for exact tables)."""
    bx, by = table.batch_values(xs), table.batch_values(ys)
    if bx is None or len(bx) < 2:
        return np.zeros(len(np.atleast_2d(xs)))
    return batch_stderr(bx - by)


@dataclass
class CheckResult:
    name: str
    passed: bool
    n_checked: int
    n_violations: int
    worst_slack: float  # min over checks of (rhs - lhs); negative means violated
    worst_z: float  # most negative slack in units of its error
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _result(name, lhs, rhs, err, n_sigma, **details) -> CheckResult:
    lhs, rhs, err = (np.asarray(a, dtype=float).ravel() for a in np.broadcast_arrays(lhs, rhs, err))
    if lhs.size == 0:
        return CheckResult(name, True, 0, 0, float("inf"), float("inf"), dict(details, vacuous=True))
    bad = _violates(lhs, rhs, err, n_sigma)
    slack = rhs - lhs
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, slack / err, np.where(slack >= 0, np.inf, -np.inf))
    return CheckResult(name, not bad.any(), int(lhs.size), int(bad.sum()), float(slack.min()),
                       float(z.min()), details)


# ---------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True, eq=False)
class SpectrumTable:
    """Ŝ(p) on the torus momenta, stored in FFT order (index k ↦ p = 2πk/L wrapped into [-π, π))."""

    shape: tuple[int, ...]
    values: np.ndarray
    errors: np.ndarray
    batches: np.ndarray | None = None

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def momenta(self) -> np.ndarray:
        """Array (*shape, d) of momenta in [-π, π)."""
        axes = [2 * np.pi * np.fft.fftfreq(n) for n in self.shape]
        grids = np.meshgrid(*axes, indexing="ij")
        p = np.stack(grids, axis=-1)
        return np.where(p >= np.pi, p - 2 * np.pi, p)

    @property
    def dispersion(self) -> np.ndarray:
        """ε(p) = 2 Σ_j (1 - cos p_j)."""
        return 2.0 * (1.0 - np.cos(self.momenta)).sum(axis=-1)

    def negative_modes(self, n_sigma: float = 3.0) -> int:
        return int(_violates(-self.values, 0.0, self.errors, n_sigma).sum())

    def rows(self):
        p = self.momenta.reshape(-1, self.d)
        return zip(p.tolist(), self.values.ravel().tolist(), self.errors.ravel().tolist())


def spectrum(table: TwoPointTable) -> SpectrumTable:
    """Ŝ(p) = Σ_x S(x) e^{-ip·x}; real because the table is reflection symmetric."""
    axes = tuple(range(table.d))
    values = np.fft.fftn(table.values).real
    batches = None
    errors = np.zeros(table.shape)
    if table.batches is not None:
        batches = np.fft.fftn(table.batches, axes=tuple(a + 1 for a in axes)).real
        if len(batches) >= 2:
            errors = batch_stderr(batches)
    return SpectrumTable(table.shape, values, errors, batches)


def infrared_check(spec: SpectrumTable, beta: float, J: float = 1.0, n_sigma: float = 3.0) -> CheckResult:
    """ε(p) Ŝ(p) <= 1/(βJ) at every p ≠ 0 (J is the per-edge coupling)."""
    if beta <= 0:
        return CheckResult("infrared", True, 0, 0, float("inf"), float("inf"), {"vacuous": True})
    eps = spec.dispersion
    nonzero = eps > 0
    bound = 1.0 / (beta * J)
    lhs = (eps * spec.values)[nonzero]
    err = (eps * spec.errors)[nonzero]
    res = _result("infrared", lhs, bound, err, n_sigma, bound=bound)
    res.details["max_product"] = float(lhs.max()) if lhs.size else 0.0
    return res


def sum_rule_check(spec: SpectrumTable, table: TwoPointTable) -> CheckResult:
    """⟨τ_0²⟩ = mean_p Ŝ(p) and Ŝ(0) = χ on the same data (deterministic)."""
    s0 = float(table.values.flat[0])
    dev = abs(s0 - float(spec.values.mean()))
    parseval = abs(float(spec.values.flat[0]) - table.susceptibility())
    scale = max(1.0, abs(s0))
    ok = dev <= SUM_RULE_TOL * scale and parseval <= SUM_RULE_TOL * max(1.0, table.susceptibility())
    return CheckResult("sumrule", bool(ok), 2, int(not ok), -max(dev, parseval), float("inf") if ok else -float("inf"),
                       {"sum_rule_deviation": dev, "zero_mode_deviation": parseval})


def spectrum_monotonicity_check(spec: SpectrumTable, n_sigma: float = 3.0) -> CheckResult:
    """Ŝ non-increasing in each |p_j| and ε_1(p_1) Ŝ(p_1, 0, ..) non-decreasing in |p_1|."""
    L0 = spec.shape[0]
    half = L0 // 2
    lhs, rhs, err = [], [], []
    vals, errs = spec.values, spec.errors
    bat = spec.batches
    for axis in range(spec.d):
        n = spec.shape[axis]
        for k in range(n // 2):
            a = np.take(vals, k, axis=axis)
            b = np.take(vals, k + 1, axis=axis)
            if bat is not None and len(bat) >= 2:
                e = batch_stderr(np.take(bat, k + 1, axis=axis + 1) - np.take(bat, k, axis=axis + 1))
            else:
                e = np.zeros_like(a)
            lhs.append(b.ravel())
            rhs.append(a.ravel())
            err.append(e.ravel())
    # axis product
    ks = np.arange(half + 1)
    eps1 = 2.0 * (1.0 - np.cos(2 * np.pi * ks / L0))
    idx = (ks,) + (0,) * (spec.d - 1)
    prod = eps1 * vals[idx]
    if bat is not None and len(bat) >= 2:
        pb = eps1 * bat[(slice(None),) + idx]
        perr = batch_stderr(pb[:, :-1] - pb[:, 1:])
    else:
        perr = np.zeros(half)
    lhs.append(prod[:-1])
    rhs.append(prod[1:])
    err.append(perr)
    return _result("spectrum-monotone", np.concatenate(lhs), np.concatenate(rhs), np.concatenate(err), n_sigma)


# ---------------------------------------------------------------------------
# position-space checks


def sliding_scale_check(table: TwoPointTable, pairs, beta: float, C: float = DEFAULT_SLIDING_C,
                        n_sigma: float = 3.0) -> CheckResult:
    """(χ_L/L²)/(χ_ℓ/ℓ²) <= C/β, plus χ_L/L^d <= χ_ℓ/ℓ^d, for each pair ℓ <= L."""
    d = table.d
    rows = []
    lhs, rhs, err = [], [], []
    for ell, L in pairs:
        if not 1 <= ell <= L <= table.half_side:
            raise ValueError(f"need 1 <= ℓ <= L <= {table.half_side}, got ({ell}, {L})")
        ratio, ratio_err = with_error(table, lambda v: (chi(table, L, v) / L**2) / (chi(table, ell, v) / ell**2))
        naive, naive_err = with_error(table, lambda v: chi(table, L, v) / L**d - chi(table, ell, v) / ell**d)
        bound = C / beta if beta > 0 else float("inf")
        lhs += [ratio, naive]
        rhs += [bound, 0.0]
        err += [ratio_err, naive_err]
        rows.append({"ell": ell, "L": L, "ratio": ratio, "ratio_err": ratio_err, "bound": bound,
                     "naive_difference": naive, "naive_err": naive_err})
    return _result("sliding", lhs, rhs, err, n_sigma, rows=rows, C=C)


def _orbit_reps(table: TwoPointTable, max_coord: int) -> np.ndarray:
    d = table.d
    reps = list(itertools.combinations_with_replacement(range(max_coord + 1), d))
    return np.array([r[::-1] for r in reps], dtype=np.int64).reshape(-1, d)  # descending coordinates


def mms_check(table: TwoPointTable, n_sigma: float = 3.0) -> CheckResult:
    """Monotonicity of S on the torus.

    (i) S(x + e_1) <= S(x) whenever 0 <= x_1 < L/2 (every x, all axes by symmetry);
    (ii) S(|x|_∞ e_1) >= S(x) >= S(|x|_1 e_1) while |x|_1 <= L/2;
    (iii) S(x) >= S(y) whenever |y|_∞ >= d |x|_∞.
    """
    d, h = table.d, table.half_side
    coords = table.torus.minimal_image(table.torus.coords())
    # (i)
    sel = (coords[:, 0] >= 0) & (coords[:, 0] < table.shape[0] / 2) & (coords[:, 0] + 1 <= h)
    x = coords[sel]
    y = x.copy()
    y[:, 0] += 1
    l1, r1, e1 = table.S(y), table.S(x), _diff_err(table, y, x)
    # (ii)
    reps = _orbit_reps(table, h)
    sup = reps.max(axis=1)
    one = reps.sum(axis=1)
    ok = one <= h
    r = reps[ok]
    ax_sup = np.zeros_like(r)
    ax_sup[:, 0] = sup[ok]
    ax_one = np.zeros_like(r)
    ax_one[:, 0] = one[ok]
    l2 = np.concatenate([table.S(r), table.S(ax_one)])
    r2 = np.concatenate([table.S(ax_sup), table.S(r)])
    e2 = np.concatenate([_diff_err(table, r, ax_sup), _diff_err(table, ax_one, r)])
    # (iii)
    small = reps[d * sup <= h]
    l3, r3, e3 = [], [], []
    for xs in small:
        far = reps[sup >= d * xs.max()]
        if len(far):
            l3.append(table.S(far))
            r3.append(np.full(len(far), float(table.S(xs))))
            e3.append(_diff_err(table, far, np.repeat(xs[None], len(far), axis=0)))
    parts = {"axis": _result("mms-i", l1, r1, e1, n_sigma), "norms": _result("mms-ii", l2, r2, e2, n_sigma)}
    if l3:
        parts["far"] = _result("mms-iii", np.concatenate(l3), np.concatenate(r3), np.concatenate(e3), n_sigma)
    lhs = np.concatenate([l1, l2] + l3)
    rhs = np.concatenate([r1, r2] + r3)
    err = np.concatenate([e1, e2] + e3)
    return _result("mms", lhs, rhs, err, n_sigma,
                   parts={k: {"n_checked": v.n_checked, "n_violations": v.n_violations, "worst_z": v.worst_z}
                          for k, v in parts.items()})


def _axis_window(table: TwoPointTable, window: int | None) -> int:
    return table.shape[0] // 4 if window is None else int(window)


def log_convexity_check(table: TwoPointTable, axis: int = 0, window: int | None = None,
                        n_sigma: float = 3.0) -> CheckResult:
    """S(n)² <= S(n-1) S(n+1) along an axis for 1 <= n <= window (default L/4)."""
    top = _axis_window(table, window)
    flags = ["window exceeds L/4: periodic images bias the axis"] if top > table.shape[0] // 4 else []
    ns = np.arange(1, top + 1)

    def pts(n):
        x = np.zeros((len(ns), table.d), dtype=np.int64)
        x[:, axis] = n
        return x

    def gap(v):
        s = lambda x: v[tuple(np.mod(x, table.shape).T)]
        return s(pts(ns)) ** 2 - s(pts(ns - 1)) * s(pts(ns + 1))

    lhs = gap(table.values)
    if table.batches is not None and len(table.batches) >= 2:
        b = table.batches
        total = b.sum(axis=0)
        nb = len(b)
        leave = np.array([gap((total - b[i]) / (nb - 1)) for i in range(nb)])
        err = np.sqrt((nb - 1) / nb * ((leave - leave.mean(axis=0)) ** 2).sum(axis=0))
    else:
        err = np.zeros_like(lhs)
    return _result("logconvex", lhs, 0.0, err, n_sigma, window=top, flags=flags)


def gradient_terms(table: TwoPointTable, n: int, values: np.ndarray | None = None):
    """S(n e_1)/S(dn e_1) ... returns (ratio, log term) entering F(n) without the constant."""
    v = table.values if values is None else values
    ax = lambda m: v[(m % table.shape[0],) + (0,) * (table.d - 1)]
    ratio = ax(n) / ax(table.d * n)
    log_term = math.log(2.0 * ax(n // 2) / ax(n))
    return ratio, log_term


def gradient_check(table: TwoPointTable, C: float = DEFAULT_GRADIENT_C, n_sigma: float = 3.0,
                   max_n: int | None = None) -> CheckResult:
    """|S(x ± e_i) - S(x)| <= F(|x|)/|x| S(x) with F(n) = C S(ne_1)/S(dne_1) log(2S(⌊n/2⌋e_1)/S(ne_1)).

    Only n with d·n <= half side enter (S(dn e_1) must be on the torus).
    Also reports C_min, the smallest constant passing every tested x.
    """
    d, h = table.d, table.half_side
    top = h // d if max_n is None else min(max_n, h // d)
    coords = table.torus.minimal_image(table.torus.coords())
    sup = np.abs(coords).max(axis=1)
    lhs, rhs, err, needed = [], [], [], []
    flags = []
    zero_sd = lambda m: table.errors[(m % table.shape[0],) + (0,) * (d - 1)]
    for n in range(1, top + 1):
        if table.axis(d * n)[0] <= n_sigma * zero_sd(d * n):
            flags.append(f"S({d * n} e1) statistically zero at n={n}")
            continue
        ratio, log_term = gradient_terms(table, n)
        xs = coords[sup == n]
        for i in range(d):
            for sgn in (1, -1):
                ys = xs.copy()
                ys[:, i] += sgn
                delta = np.abs(table.S(ys) - table.S(xs))
                sx = table.S(xs)
                bound = C * ratio * log_term / n * sx
                e = _diff_err(table, ys, xs)
                lhs.append(delta)
                rhs.append(bound)
                err.append(e)
                with np.errstate(divide="ignore", invalid="ignore"):
                    needed.append(np.where(bound > 0, C * delta / bound, np.where(delta > 0, np.inf, 0.0)))
    if not lhs:
        return CheckResult("gradient", True, 0, 0, float("inf"), float("inf"),
                           {"vacuous": True, "C": C, "C_min": 0.0, "flags": flags})
    res = _result("gradient", np.concatenate(lhs), np.concatenate(rhs), np.concatenate(err), n_sigma,
                  C=C, flags=flags, max_n=top)
    res.details["C_min"] = float(np.concatenate(needed).max())
    return res


@dataclass
class FloorReport:
    floor: float  # min over x ≠ 0 of S(x)|x|^{d-1}
    corrected_floor: float  # min of β|J| S(x)|x|^{d-1} exp((d|x| + 1)/ξ)
    xi: float
    by_radius: list[float]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def power_law_floor(table: TwoPointTable, beta: float, J: float = 1.0) -> FloorReport:
    """Empirical constant in the lower bound S(x) >= c e^{-(d|x|+1)/ξ} / (β|J| |x|^{d-1})."""
    d = table.d
    xi = table.xi if math.isfinite(table.xi) else correlation_length_second_moment(table)
    sup = table.torus.site_sup_norm.reshape(table.shape)
    by_r = []
    corr = []
    for r in range(1, table.half_side + 1):
        m = float(table.values[sup == r].min())
        by_r.append(m * r ** (d - 1))
        if math.isfinite(xi) and xi > 0:
            corr.append(beta * 2 * d * J * by_r[-1] * math.exp((d * r + 1) / xi))
    return FloorReport(min(by_r) if by_r else float("nan"), min(corr) if corr else float("nan"), xi, by_r)


CHECKS = ("ir", "sumrule", "sliding", "mms", "logconvex", "gradient", "monotone")


def run_checks(table: TwoPointTable, checks=CHECKS, beta: float | None = None, J: float = 1.0,
               sliding_pairs=None, sliding_C: float = DEFAULT_SLIDING_C, gradient_C: float = DEFAULT_GRADIENT_C,
               window: int | None = None, n_sigma: float = 3.0) -> dict[str, CheckResult]:
    beta = table.beta if beta is None else beta
    spec = spectrum(table)
    out: dict[str, CheckResult] = {}
    for name in checks:
        if name == "ir":
            out[name] = infrared_check(spec, beta, J, n_sigma)
        elif name == "sumrule":
            out[name] = sum_rule_check(spec, table)
        elif name == "sliding":
            h = table.half_side
            pairs = sliding_pairs or [(ell, L) for ell in (1, 2) for L in (2, 4, h) if ell <= L <= h]
            out[name] = sliding_scale_check(table, sorted(set(map(tuple, pairs))), beta, sliding_C, n_sigma)
        elif name == "mms":
            out[name] = mms_check(table, n_sigma)
        elif name == "logconvex":
            out[name] = log_convexity_check(table, 0, window, n_sigma)
        elif name == "gradient":
            out[name] = gradient_check(table, gradient_C, n_sigma)
        elif name == "monotone":
            out[name] = spectrum_monotonicity_check(spec, n_sigma)
        else:
            raise ValueError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
    return out
