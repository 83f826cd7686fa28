"""Two-point tables on a torus: symmetrization, lookup and CSV round trips."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .lattice import GeometryError, ModelSpec, Torus, make_torus
from .stats import batch_stderr


class TableError(ValueError):
    """Malformed, incomplete or mismatched table."""


def reflect(a: np.ndarray, axis: int) -> np.ndarray:
    """b(x) = a(-x_axis) on a periodic grid."""
    return np.roll(np.flip(a, axis=axis), 1, axis=axis)


def symmetrize(a: np.ndarray, lead: int = 0) -> np.ndarray:
    """Average over axis reflections and axis permutations of a cubic grid.

    ``lead`` leading axes (e.g. a batch axis) are left alone. Averaging over
    the reflections first and then over the permutations covers the whole
    hyperoctahedral group.
    """
    a = np.asarray(a, dtype=float)
    d = a.ndim - lead
    for ax in range(lead, lead + d):
        a = 0.5 * (a + reflect(a, ax))
    if len(set(a.shape[lead:])) == 1 and d > 1:
        head = tuple(range(lead))
        perms = list(itertools.permutations(range(lead, lead + d)))
        a = sum(np.transpose(a, head + p) for p in perms) / len(perms)
    return a


@dataclass(frozen=True, eq=False)
class TwoPointTable:
    """S(x) = ⟨τ_0 τ_x⟩ on a torus, with per-batch values for error bars.

    ``values`` has the torus shape and is indexed by displacement mod L.
    ``batches`` (optional) holds one such array per independent batch.
    """

    shape: tuple[int, ...]
    values: np.ndarray
    batches: np.ndarray | None = None
    beta: float = float("nan")
    model: str = "ising"
    xi: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(self.shape):
            raise TableError(f"values shape {vals.shape} does not match torus {self.shape}")
        if not np.all(np.isfinite(vals)):
            raise TableError("table contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.batches is not None:
            b = np.asarray(self.batches, dtype=float)
            if b.shape[1:] != vals.shape:
                raise TableError("batch arrays must match the table shape")
            b.setflags(write=False)
            object.__setattr__(self, "batches", b)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def torus(self) -> Torus:
        return make_torus(self.d, self.shape)

    @property
    def L(self) -> int:
        return self.torus.L

    @property
    def half_side(self) -> int:
        return min(self.shape) // 2

    @property
    def errors(self) -> np.ndarray:
        if self.batches is None or len(self.batches) < 2:
            return np.zeros(self.shape)
        return batch_stderr(self.batches)

    @property
    def is_exact(self) -> bool:
        return self.batches is None

    def _idx(self, x) -> tuple:
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.d:
            raise GeometryError(f"displacement needs {self.d} coordinates")
        return tuple(np.mod(x, self.shape).T)

    def S(self, x) -> np.ndarray:
        return self.values[self._idx(x)]

    def stderr(self, x) -> np.ndarray:
        return self.errors[self._idx(x)]

    def batch_values(self, x) -> np.ndarray | None:
        """Per-batch S(x) with shape (n_batches, ...) or None for exact tables."""
        if self.batches is None:
            return None
        idx = self._idx(x)
        return self.batches[(slice(None),) + idx]

    def axis(self, n) -> np.ndarray:
        """S(n e_1) for integer n (array ok)."""
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        x = np.zeros((len(n), self.d), dtype=np.int64)
        x[:, 0] = n
        return self.S(x)

    def symmetrized(self) -> "TwoPointTable":
        b = None if self.batches is None else symmetrize(self.batches, lead=1)
        return replace(self, values=symmetrize(self.values), batches=b)

    def susceptibility(self) -> float:
        return float(self.values.sum())

    @classmethod
    def from_exact(cls, model: ModelSpec, origin: int = 0) -> "TwoPointTable":
        """Exact table from the spin oracle on a small torus."""
        from .exact.spins import SpinOracle

        torus = model.torus
        if torus is None:
            raise TableError("exact tables need a torus model")
        oracle = SpinOracle(model)
        row = oracle.two_point[origin]
        coords = torus.coords()
        disp = np.mod(coords - coords[origin], torus.shape)
        vals = np.zeros(torus.shape)
        vals[tuple(disp.T)] = row
        return cls(torus.shape, vals, None, model.beta, model.site.label).symmetrized()

    @classmethod
    def ising_ring(cls, L: int, beta: float, J: float = 1.0) -> "TwoPointTable":
        """Closed form on the cycle of length L: S(n) = (t^n + t^(L-n)) / (1 + t^L), t = tanh(βJ)."""
        t = math.tanh(beta * J)
        n = np.arange(L)
        vals = (t**n + t ** (L - n)) / (1 + t**L)
        return cls((L,), vals, None, beta, "ising")

    # -----------------------------------------------------------------------
    # CSV

    def to_csv(self, path: str | Path, with_batches: bool = True) -> None:
        """Write ``x1..xd,S,stderr`` rows (minimal-image coordinates).

        Per-batch values go to a sidecar ``<stem>.batches.csv`` when present.
        """
        path = Path(path)
        tor = self.torus
        coords = tor.minimal_image(tor.coords())
        idx = tuple(np.mod(coords, self.shape).T)
        head = ",".join(f"x{i + 1}" for i in range(self.d))
        lines = [
            f"# shape={','.join(map(str, self.shape))}",
            f"# beta={self.beta!r}",
            f"# model={self.model}",
            f"# xi={self.xi!r}",
            f"# exact={int(self.is_exact)}",
            f"{head},S,stderr",
        ]
        errs = self.errors
        for c, v, e in zip(coords.tolist(), self.values[idx].tolist(), errs[idx].tolist()):
            lines.append(",".join(map(str, c)) + f",{v!r},{e!r}")
        path.write_text("\n".join(lines) + "\n")
        side = batches_path(path)
        if with_batches and self.batches is not None:
            bl = [f"# batches={len(self.batches)}", head + "," + ",".join(f"b{i}" for i in range(len(self.batches)))]
            cols = self.batches[(slice(None),) + idx].T
            for c, row in zip(coords.tolist(), cols.tolist()):
                bl.append(",".join(map(str, c)) + "," + ",".join(repr(v) for v in row))
            side.write_text("\n".join(bl) + "\n")
        elif side.exists():
            side.unlink()

    @classmethod
    def from_csv(cls, path: str | Path) -> "TwoPointTable":
        path = Path(path)
        meta: dict[str, str] = {}
        rows = []
        header = None
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
        if header is None or "shape" not in meta:
            raise TableError(f"{path}: missing header or shape line")
        shape = tuple(int(s) for s in meta["shape"].split(","))
        d = len(shape)
        if header != [f"x{i + 1}" for i in range(d)] + ["S", "stderr"]:
            raise TableError(f"{path}: unexpected columns {header}")
        if len(rows) != int(np.prod(shape)):
            raise TableError(f"{path}: {len(rows)} rows, expected {int(np.prod(shape))} (incomplete table)")
        arr = np.array(rows, dtype=float)
        coords = arr[:, :d].astype(np.int64)
        vals = np.full(shape, np.nan)
        vals[tuple(np.mod(coords, shape).T)] = arr[:, d]
        if np.isnan(vals).any():
            raise TableError(f"{path}: duplicate or missing displacements")
        batches = None
        side = batches_path(path)
        if side.exists():
            brow = [ln.split(",") for ln in side.read_text().splitlines() if ln and not ln.startswith("#")][1:]
            barr = np.array(brow, dtype=float)
            bc = barr[:, :d].astype(np.int64)
            batches = np.zeros((barr.shape[1] - d,) + shape)
            batches[(slice(None),) + tuple(np.mod(bc, shape).T)] = barr[:, d:].T
        return cls(shape, vals, batches, float(meta.get("beta", "nan")), meta.get("model", "ising"),
                   float(meta.get("xi", "nan")))


def batches_path(path: Path) -> Path:
    return path.with_name(path.stem + ".batches.csv")


def correlation_length_second_moment(table: TwoPointTable) -> float:
    """ξ from χ and the lowest non-zero Fourier mode along axis 1."""
    L = table.shape[0]
    chi = table.values.sum()
    phase = np.cos(2 * math.pi * np.arange(L) / L)
    proj = table.values.sum(axis=tuple(range(1, table.d)))
    F = float(phase @ proj)
    if F <= 0 or chi <= F:
        return float("nan")
    return math.sqrt((chi / F - 1.0) / (4.0 * math.sin(math.pi / L) ** 2))


def correlation_length_exponential(table: TwoPointTable, window: tuple[int, int] | None = None) -> float:
    """ξ from a log-linear fit of the axis correlation on the given window."""
    half = table.half_side
    lo, hi = window or (1, max(2, half // 2))
    n = np.arange(lo, hi + 1)
    s = table.axis(n)
    if np.any(s <= 0) or len(n) < 2:
        return float("nan")
    slope = np.polyfit(n, np.log(s), 1)[0]
    return float("inf") if slope >= 0 else float(-1.0 / slope)
