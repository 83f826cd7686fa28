"""Command line entry point: ``current-lab <subcommand>``.

Every subcommand writes a JSON run report. Exit codes: 0 when every
assertion passes, 2 for a statistical failure beyond the configured σ, 3 for
a violated exact identity (or a replay mismatch), 4 for configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import platform
import sys
import tempfile
import time
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .lattice import GSBlock, GeometryError, Ising, ModelSpec, make_torus, read_edge_list

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_STAT, EXIT_EXACT, EXIT_CONFIG = 0, 2, 3, 4
DEFAULT_SEED = 20261014
PIPELINES = ("exact-verify", "sample-currents", "spins", "diagrams", "fourier", "gs-calibrate",
             "full-gaussianity-study")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


# ---------------------------------------------------------------------------
# JSON helpers


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if hasattr(obj, "as_dict"):
        return jsonable(obj.as_dict())
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def canonical(obj: Any) -> bytes:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":")).encode()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# configuration


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def need(sec: dict, key: str, where: str):
    if key not in sec:
        raise ConfigError(f"[{where}] is missing {key!r}")
    return sec[key]


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def build_model(cfg: dict, beta: float | None = None) -> ModelSpec:
    m = _section(cfg, "model")
    beta = float(m.get("beta", 0.0)) if beta is None else beta
    site_kind = m.get("site", "ising")
    if site_kind == "ising":
        site = Ising()
    elif site_kind == "gs":
        try:
            site = GSBlock(int(need(m, "N", "model")), float(need(m, "lam", "model")), float(need(m, "b", "model")))
        except GeometryError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(f"unknown site measure {site_kind!r} (use 'ising' or 'gs')")
    if "edges" in m:
        lattice = read_edge_list(m["edges"])
    else:
        if "d" not in m or "L" not in m:
            raise ConfigError("[model] needs d and L, or an edge-list file in 'edges'")
        lattice = make_torus(int(m["d"]), int(m["L"]), float(m.get("J", 1.0)))
    return ModelSpec(lattice, beta, site)


def _seed(cfg: dict) -> int:
    seed = cfg.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return seed


def _sampling(cfg: dict) -> dict:
    s = {"chains": 16, "sweeps": 2000, "blocks": 8, "burn_fraction": 0.1, "cluster": True}
    s.update(_section(cfg, "sampling"))
    return s


def _n_sigma(cfg: dict) -> float:
    return float(_section(cfg, "tolerances").get("n_sigma", 3.0))


# ---------------------------------------------------------------------------
# pipelines: each fills an Outcome with results, assertions and files


class Outcome:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.results: dict[str, Any] = {}
        self.assertions: list[dict] = []
        self.files: list[Path] = []
        self.timing: dict[str, float] = {}

    def check(self, name: str, passed: bool, kind: str, **info) -> None:
        self.assertions.append({"name": name, "kind": kind, "passed": bool(passed), **jsonable(info)})

    def file(self, name: str) -> Path:
        path = self.outdir / name
        self.files.append(path)
        return path


def pipeline_exact(cfg: dict, out: Outcome) -> None:
    from .exact.harness import SUITES, run_suites

    sec = _section(cfg, "exact")
    suites = sec.get("suites", list(SUITES))
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ConfigError(f"unknown exact suites {sorted(unknown)}")
    res = run_suites(suites, int(sec.get("max_vertices", 4)), int(sec.get("fuzz", 1000)),
                     int(sec.get("max_edges", 8)), _seed(cfg))
    rows = {}
    for name, r in res.items():
        d = r.as_dict()
        out.timing[f"exact:{name}"] = d.pop("seconds")
        rows[name] = d
        out.check(f"exact:{name}", r.passed, "exact", checks=r.n_checks, violations=r.n_violations,
                  max_deviation=r.max_deviation)
    out.results["suites"] = rows


def pipeline_currents(cfg: dict, out: Outcome) -> None:
    from .current_mc import (connectivity_observable, four_corner_sources, intersection_stats,
                             run_currents)

    model = build_model(cfg)
    if not model.is_ising:
        raise ConfigError("current sampling is for Ising models")
    s = _sampling(cfg)
    sec = _section(cfg, "currents")
    seed = _seed(cfg)
    ns = _n_sigma(cfg)
    pairs = [tuple(int(a) for a in p) for p in sec.get("pairs", [])]
    if pairs:
        sources = [list(map(int, src)) for src in sec.get("sources", [[]])]
        dump = [] if sec.get("dump") else None
        run = run_currents(model, sources, connectivity_observable(model, pairs), int(s["chains"]),
                           int(s["sweeps"]), int(s["blocks"]), seed, float(s["burn_fraction"]), dump=dump)
        rows = []
        exact = None
        if model.graph.n_edges <= int(sec.get("exact_max_edges", 12)) and len(sources) <= 2:
            from .exact.checks import ExactModel
            from .exact.events import Connected

            space = ExactModel(model).space
            if len(sources) == 1:
                exact = [space.probability(sources[0], Connected(x, y)(space)) for x, y in pairs]
            else:
                exact = [space.pair_probability(sources[0], sources[1], Connected(x, y)(space)) for x, y in pairs]
        for i, (x, y) in enumerate(pairs):
            row = {"x": x, "y": y, "estimate": run.mean[i], "stderr": run.stderr[i]}
            if exact is not None:
                row["exact"] = exact[i]
                err = max(run.stderr[i], 1e-15)
                row["z"] = (run.mean[i] - exact[i]) / err
                out.check(f"connect:{x}-{y}", abs(run.mean[i] - exact[i]) <= ns * run.stderr[i] + 1e-12,
                          "statistical", z=row["z"])
            rows.append(row)
        out.results["connectivity"] = {"sources": sources, "n_samples": run.n_samples, "rows": rows}
        if dump is not None:
            path = out.file(sec["dump"])
            path.write_text("\n".join(dump) + "\n")
    inter = sec.get("intersection")
    if inter:
        torus = model.torus
        if torus is None:
            raise ConfigError("intersection statistics need a torus model")
        where = "currents.intersection"
        src = inter.get("sources") or four_corner_sources(torus, int(need(inter, "spacing", where)))
        rep = intersection_stats(model, src, need(inter, "lengths", where), int(need(inter, "K", where)),
                                 int(s["chains"]),
                                 int(s["sweeps"]), float(inter.get("delta", 0.5)), seed)
        out.results["intersection"] = rep
        out.check("covering-recheck", rep.covering_failures == 0, "exact", failures=rep.covering_failures)
        gap = rep.conditional_mean - rep.mean_size
        out.check("clustering-direction", gap + ns * math.hypot(rep.conditional_mean_err, rep.mean_size_err) > 0,
                  "statistical", difference=gap)
    if not pairs and not inter:
        raise ConfigError("[currents] needs 'pairs' and/or an 'intersection' table")


def _measure(cfg: dict, model: ModelSpec):
    from .spin_mc import PROFILES, Measure, read_profile_csv, smear_spec

    sec = _section(cfg, "spins")
    smear = None
    if "smear" in sec:
        sm = sec["smear"]
        profile = sm.get("profile", "bump")
        if profile in PROFILES:
            prof = profile
        else:
            prof = read_profile_csv(profile, model.torus)
        scale = int(sm.get("scale", model.torus.L // 4))
        smear = smear_spec(model.torus, prof, scale, int(sm.get("max_order", 4)))
    raw = sec.get("quadruples", [])
    if raw == "plaquette":
        raw = [_plaquette(model)]
    quads = [tuple(int(a) for a in q) for q in raw]
    return Measure(twopoint=model.torus is not None, quadruples=tuple(quads), smear=smear)


def _plaquette(model: ModelSpec) -> list[int]:
    """Corners of the unit square at the origin (four consecutive sites in 1D)."""
    tor = model.torus
    if tor is None or tor.d == 1:
        return [0, 1, 2, 3]
    corners = np.zeros((4, tor.d), dtype=np.int64)
    corners[1, 0] = corners[2, 1] = 1
    corners[3, :2] = 1
    return tor.index(corners).tolist()


def _spin_run(cfg: dict, model: ModelSpec, seed: int, measure=None):
    from .spin_mc import sample_spins

    s = _sampling(cfg)
    return sample_spins(model, int(s["sweeps"]), int(s["chains"]), seed, int(s["blocks"]),
                        float(s["burn_fraction"]), measure or _measure(cfg, model), bool(s["cluster"]))


def _locate(cfg: dict, sec: dict, seed: int) -> dict:
    from .spin_mc import locate_pseudo_critical

    base = _section(cfg, "model")
    site_cfg = cfg

    def make(L, beta):
        return build_model(deep_merge(site_cfg, {"model": {**base, "L": int(L)}}), beta)

    res = locate_pseudo_critical(make, need(sec, "betas", "locate"), need(sec, "sizes", "locate"), int(sec.get("sweeps", 1000)),
                                 int(sec.get("chains", 8)), seed)
    return res.as_dict()


def pipeline_spins(cfg: dict, out: Outcome) -> None:
    from .spin_mc import magnetization_moments, smeared_moments, two_point, ursell4_mc

    seed = _seed(cfg)
    sec = _section(cfg, "spins")
    if "locate" in sec:
        out.results["locator"] = _locate(cfg, sec["locate"], seed)
        if not _section(cfg, "model").get("beta"):
            return
    model = build_model(cfg)
    run = _spin_run(cfg, model, seed)
    out.results["moments"] = magnetization_moments(run)
    out.results["n_samples"] = run.n_samples
    out.results["n_wolff"] = run.info["n_wolff"]
    if model.torus is not None:
        table = two_point(run)
        path = out.file(sec.get("table", "table.csv"))
        table.to_csv(path)
        out.results["xi"] = table.xi
        out.results["table"] = path.name
    if run.measure.quadruples:
        out.results["ursell4"] = [dict(zip(("value", "stderr"), ursell4_mc(run, *q)), sites=list(q))
                                  for q in run.measure.quadruples]
    if run.measure.smear is not None:
        out.results["smeared"] = smeared_moments(run)


def _load_table(cfg: dict, sec: dict):
    from .tables import TwoPointTable

    path = sec.get("table")
    if not path:
        raise ConfigError("a two-point table path is required (--table)")
    try:
        return TwoPointTable.from_csv(path), Path(path)
    except OSError as exc:
        raise ConfigError(f"cannot read table {path}: {exc.strerror}") from None


def pipeline_diagrams(cfg: dict, out: Outcome) -> None:
    from . import diagrams as dg
    from .lattice import GeometryError as _GE

    sec = _section(cfg, "diagrams")
    table, path = _load_table(cfg, sec)
    consts = _section(cfg, "constants")
    c = float(consts.get("c", dg.DEFAULT_C_SMALL))
    C = float(consts.get("C", dg.DEFAULT_C_LARGE))
    D = float(consts.get("D", 2.0))
    ops = sec.get("ops", ["bubble", "scales", "regular"])
    ns = _n_sigma(cfg)
    out.results["table_id"] = sha256_bytes(path.read_bytes())[:16]
    for op in ops:
        if op == "bubble":
            rep = dg.diagram_report(table, out.results["table_id"])
            out.results["diagrams"] = rep
            out.check("monotone-in-L", rep.monotone, "exact")
        elif op in ("tree", "ratio"):
            quads = sec.get("quadruples")
            if not quads:
                raise ConfigError("tree/ratio need 'quadruples' (site coordinates)")
            trees = [dict(points=q, tree=dg.tree_sum(table, *q), shell=dg.tree_shell(table, *q)) for q in quads]
            out.results["tree"] = trees
            out.check("tree-nonnegative", all(t["tree"] >= 0 for t in trees), "exact")
            if op == "ratio":
                u4 = sec.get("u4")
                if not u4 or len(u4) != len(quads):
                    raise ConfigError("ratio needs one [U4, stderr] entry per quadruple in 'u4'")
                rows = dg.improved_ratio_report(table, quads, [tuple(map(float, v)) for v in u4], c, ns)
                out.results["ratio"] = rows
                out.check("tree-bound", all(r.holds for r in rows), "exact" if table.is_exact else "statistical")
        elif op == "scales":
            seq = dg.scale_sequence(table, D)
            out.results["scale_sequence"] = dict(seq.as_dict(), covering_lengths=seq.covering_lengths())
            out.check("scale-sequence", seq.verify(), "exact")
        elif op == "regular":
            rep = dg.regular_scales(table, c, C)
            out.results["regular_scales"] = rep
            out.check("P2-implies-P1(1+16C)", rep.implication_ok, "exact")
        elif op == "g":
            if "abs_u4_sum" not in sec:
                raise ConfigError("g needs 'abs_u4_sum' (and optionally 'abs_u4_sum_err')")
            out.results["coupling"] = dg.renormalized_coupling(table, float(sec["abs_u4_sum"]),
                                                               float(sec.get("abs_u4_sum_err", 0.0)))
        elif op == "gauss":
            L = int(sec.get("scale", table.half_side // 2 or 1))
            try:
                out.results["gaussianity_bound"] = dict(zip(("value", "stderr", "method"),
                                                             dg.gaussianity_bound(table, L, float(sec.get("r", 1.0)), c,
                                                                                  seed=_seed(cfg))))
            except _GE as exc:
                raise ConfigError(str(exc)) from None
        else:
            raise ConfigError(f"unknown diagram op {op!r}")


def pipeline_fourier(cfg: dict, out: Outcome) -> None:
    from . import fourier as fr

    sec = _section(cfg, "fourier")
    table, path = _load_table(cfg, sec)
    beta = float(sec.get("beta", table.beta))
    if not math.isfinite(beta):
        raise ConfigError("β is unknown: set it in the table header or in [fourier] beta")
    consts = _section(cfg, "constants")
    checks = sec.get("checks", list(fr.CHECKS))
    try:
        res = fr.run_checks(table, checks, beta, float(sec.get("J", 1.0)), sec.get("pairs"),
                            float(consts.get("sliding_C", fr.DEFAULT_SLIDING_C)),
                            float(consts.get("gradient_C", fr.DEFAULT_GRADIENT_C)),
                            sec.get("window"), _n_sigma(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.results["table_id"] = sha256_bytes(path.read_bytes())[:16]
    out.results["checks"] = res
    kind = "exact" if table.is_exact else "statistical"
    for name, r in res.items():
        out.check(f"fourier:{name}", r.passed, "exact" if name == "sumrule" else kind,
                  violations=r.n_violations, worst_z=r.worst_z)
    out.results["power_law_floor"] = fr.power_law_floor(table, beta, float(sec.get("J", 1.0)))


def pipeline_gs(cfg: dict, out: Outcome) -> None:
    from .gs import block_bruteforce, block_law_exact, convergence_report

    sec = _section(cfg, "gs")
    targets = sec.get("targets", [[1.0, 0.0], [10.0, 0.0], [1.0, 1.0]])
    Ns = [int(n) for n in sec.get("Ns", [100, 1000, 10000])]
    tol = float(sec.get("residual_tol", 1e-6))
    reports = []
    for lam, b in targets:
        rows = convergence_report(float(lam), float(b), Ns)
        reports.append({"lambda": lam, "b": b, "rows": rows})
        last = rows[-1]
        out.check(f"residual:{lam},{b}", last["residual"] <= tol, "exact", residual=last["residual"])
        d = [r["distance"] for r in rows]
        out.check(f"distance-decreasing:{lam},{b}", all(x > y for x, y in zip(d, d[1:])), "exact", distances=d)
    out.results["calibration"] = reports
    brute = sec.get("bruteforce_N", [])
    worst = 0.0
    for N in brute:
        for g in (0.0, 0.7, 1.9):
            a, bl = block_law_exact(int(N), g, 1.0), block_bruteforce(int(N), g, 1.0)
            worst = max(worst, max(abs(x - y) / max(abs(y), 1.0) for x, y in zip(a.moments, bl.moments)))
    if brute:
        out.results["bruteforce_max_relative_deviation"] = worst
        out.check("block-vs-bruteforce", worst <= 1e-12, "exact", deviation=worst)


def pipeline_gaussianity(cfg: dict, out: Outcome) -> None:
    from . import diagrams as dg
    from .spin_mc import Measure, smear_spec, smeared_moments, two_point

    sec = _section(cfg, "study")
    seed = _seed(cfg)
    ns = _n_sigma(cfg)
    sizes = [int(L) for L in sec.get("sizes", [8, 12, 16])]
    base = _section(cfg, "model")
    if "beta_pc" in sec:
        beta_pc = float(sec["beta_pc"])
        out.results["beta_pc"] = {"beta_pc": beta_pc, "source": "config"}
    else:
        if "locate" not in sec:
            raise ConfigError("[study] needs beta_pc or a [study.locate] grid")
        loc = _locate(cfg, sec["locate"], seed)
        beta_pc = loc["beta_pc"]
        out.results["beta_pc"] = dict(loc, source="binder-crossing")
    c = float(_section(cfg, "constants").get("c", dg.DEFAULT_C_SMALL))
    rows = []
    for i, L in enumerate(sizes):
        model = build_model(deep_merge(cfg, {"model": {**base, "L": L}}), beta_pc)
        scale = max(1, L // 4)
        measure = Measure(twopoint=True, smear=smear_spec(model.torus, sec.get("profile", "bump"), scale))
        run = _spin_run(cfg, model, seed + i, measure)
        table = two_point(run)
        table_path = out.file(f"table_L{L}.csv")
        table.to_csv(table_path)
        sm = smeared_moments(run)
        bound = dg.gaussianity_bound(table, scale, float(sec.get("r", 1.0)), c,
                                     samples=int(sec.get("bound_samples", 2000)), seed=seed)
        B, B_err = dg.with_error(table, lambda v: dg.bubble(table, table.half_side, v))
        rows.append({"L": L, "beta": beta_pc, "scale": scale, "normalized_gap": sm.normalized_gap,
                     "normalized_gap_err": sm.normalized_gap_err, "bubble": B, "bubble_err": B_err,
                     "bound": bound[0], "bound_err": bound[1], "bound_method": bound[2], "xi": table.xi})
    out.results["rows"] = rows
    gaps = [(r["normalized_gap"], r["normalized_gap_err"]) for r in rows]
    out.check("gap-positive", all(g > ns * e for g, e in gaps) if sec.get("strict_positive", False)
              else all(g > 0 for g, _ in gaps), "statistical", gaps=gaps)
    out.check("gap-non-increasing", all(b <= a + ns * math.hypot(ea, eb) for (a, ea), (b, eb) in zip(gaps, gaps[1:])),
              "statistical")
    Bs = [(r["bubble"], r["bubble_err"]) for r in rows]
    out.check("bubble-increasing", all(b > a - ns * math.hypot(ea, eb) for (a, ea), (b, eb) in zip(Bs, Bs[1:])),
              "statistical")
    # relative increments of independent runs, first-order error propagation
    rel = [((b - a) / a, math.hypot(eb / a, b * ea / a**2)) for (a, ea), (b, eb) in zip(Bs, Bs[1:])]
    out.check("bubble-increments-shrinking",
              all(y <= x + ns * math.hypot(ex, ey) for (x, ex), (y, ey) in zip(rel, rel[1:])), "statistical",
              relative=[r[0] for r in rel], relative_err=[r[1] for r in rel])
    path = out.file("gaussianity.csv")
    keys = ["L", "beta", "scale", "normalized_gap", "normalized_gap_err", "bubble", "bubble_err", "bound", "bound_err",
            "bound_method", "xi"]
    path.write_text(",".join(keys) + "\n" + "".join(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                                                               for k in keys) + "\n" for r in rows))


def _input_errors() -> tuple[type[Exception], ...]:
    from .current_mc import SamplerError
    from .exact.currents import ParityError, SizeLimitError
    from .gs import CalibrationError
    from .spin_mc import SpinMCError
    from .tables import TableError

    return (GeometryError, TableError, SamplerError, SpinMCError, CalibrationError, SizeLimitError, ParityError)


INPUT_ERRORS = _input_errors()

PIPELINE_FUNCS: dict[str, Callable[[dict, Outcome], None]] = {
    "exact-verify": pipeline_exact,
    "sample-currents": pipeline_currents,
    "spins": pipeline_spins,
    "diagrams": pipeline_diagrams,
    "fourier": pipeline_fourier,
    "gs-calibrate": pipeline_gs,
    "full-gaussianity-study": pipeline_gaussianity,
}


# ---------------------------------------------------------------------------
# reports


def _versions() -> dict:
    import numba
    import scipy

    return {"current_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def exit_code(assertions: list[dict]) -> int:
    failed = [a for a in assertions if not a["passed"]]
    if any(a["kind"] == "exact" for a in failed):
        return EXIT_EXACT
    if failed:
        return EXIT_STAT
    return EXIT_OK


def execute(cfg: dict, outdir: Path, report_path: Path | None = None) -> dict:
    """Run the configured pipeline and return the report (also written to disk)."""
    name = cfg.get("pipeline")
    if name not in PIPELINE_FUNCS:
        raise ConfigError(f"unknown pipeline {name!r}; choose from {', '.join(PIPELINES)}")
    outdir.mkdir(parents=True, exist_ok=True)
    out = Outcome(outdir)
    t0 = time.perf_counter()
    try:
        PIPELINE_FUNCS[name](cfg, out)
    except INPUT_ERRORS as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    wall = time.perf_counter() - t0
    results = jsonable(out.results)
    files = {p.name: sha256_bytes(p.read_bytes()) for p in out.files}
    report = {
        "pipeline": name,
        "config": jsonable(cfg),
        "config_sha256": sha256_bytes(canonical(cfg)),
        "seed": _seed(cfg),
        "versions": _versions(),
        "wall_seconds": wall,
        "timing": out.timing,
        "results": results,
        "results_sha256": sha256_bytes(canonical(results)),
        "files": files,
        "assertions": out.assertions,
        "passed": all(a["passed"] for a in out.assertions),
    }
    report["exit_code"] = exit_code(out.assertions)
    report_path = report_path or outdir / "report.json"
    report["report_path"] = str(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def replay(report_path: str | Path, workdir: Path | None = None) -> dict:
    """Re-run a report's embedded config and compare result and file hashes."""
    try:
        original = json.loads(Path(report_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {report_path}: {exc}") from exc
    if "config" not in original:
        raise ConfigError("report carries no config")
    with tempfile.TemporaryDirectory() as tmp:
        new = execute(original["config"], Path(workdir or tmp))
    mismatched = sorted(k for k in set(original["files"]) | set(new["files"])
                        if original["files"].get(k) != new["files"].get(k))
    same = new["results_sha256"] == original["results_sha256"] and not mismatched
    return {"identical": same, "results_sha256": [original["results_sha256"], new["results_sha256"]],
            "mismatched_files": mismatched}


# ---------------------------------------------------------------------------
# argument parsing


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_pairs(text: str) -> list[list[int]]:
    return [[int(a) for a in item.split("-")] for item in _csv_list(text)]


def _torus(text: str) -> tuple[int, int]:
    parts = _csv_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--torus expects d,L")
    return int(parts[0]), int(parts[1])


def _site_model(text: str) -> dict:
    if text == "ising":
        return {"site": "ising"}
    kind, _, params = text.partition(":")
    vals = _csv_list(params)
    if kind != "gs" or len(vals) != 3:
        raise argparse.ArgumentTypeError("--model expects ising or gs:N,lam,b")
    return {"site": "gs", "N": int(vals[0]), "lam": float(vals[1]), "b": float(vals[2])}


def _sources(text: str) -> list[list[int]]:
    if "-" in text:
        return _int_pairs(text)
    pts = [int(v) for v in _csv_list(text)]
    if len(pts) not in (2, 4):
        raise argparse.ArgumentTypeError("--sources expects x,y or x,y,z,t")
    return [pts[i:i + 2] for i in range(0, len(pts), 2)]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="current-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=False, sampling=False):
        sp.add_argument("--config", help="TOML file; its values override the flags")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="out",
                        help="output directory, or a .json report path (.csv table path for spins)")
        sp.add_argument("--report", help="report path (default <out>/report.json)")
        if model:
            sp.add_argument("--torus", type=_torus, help="d,L shorthand")
            sp.add_argument("--model", type=_site_model, dest="site_model", help="ising or gs:N,lam,b")
            sp.add_argument("--d", type=int)
            sp.add_argument("--L", type=int)
            sp.add_argument("--beta", type=float)
            sp.add_argument("--J", type=float)
            sp.add_argument("--edges", help="edge-list file instead of a torus")
            sp.add_argument("--site", choices=("ising", "gs"))
            sp.add_argument("--N", type=int, help="GS block size")
            sp.add_argument("--lam", type=float)
            sp.add_argument("--b", type=float)
        if sampling:
            sp.add_argument("--chains", type=int)
            sp.add_argument("--sweeps", type=int)
            sp.add_argument("--blocks", type=int)
        return sp

    sp = common(sub.add_parser("exact-verify", help="exhaustive and fuzzed exact identity suites"))
    sp.add_argument("--suites", "--suite", type=_csv_list)
    sp.add_argument("--max-vertices", type=int)
    sp.add_argument("--fuzz", type=int)
    sp.add_argument("--max-edges", type=int)

    sp = common(sub.add_parser("sample-currents", help="worm sampling of random currents"), True, True)
    sp.add_argument("--pairs", type=_int_pairs, help="connectivity pairs, e.g. 0-5,0-3")
    sp.add_argument("--sources", type=_sources,
                    help="x,y (one current) or x,y,z,t (two currents); or dash-joined sets, e.g. 0-5,0-3")
    sp.add_argument("--dump", help="file name for sampled currents")

    sp = common(sub.add_parser("spins", help="spin Monte Carlo and two-point tables"), True, True)
    sp.add_argument("--table", help="output CSV name")
    sp.add_argument("--smear-scale", type=int)
    sp.add_argument("--profile")
    sp.add_argument("--measure", type=_csv_list, help="twopoint,u4,smeared")
    sp.add_argument("--f", dest="profile_file", help="profile CSV (x1..xd,f) for the smeared field")

    sp = common(sub.add_parser("diagrams", help="bubble, tree and scale analysis of a table"))
    sp.add_argument("--table")
    sp.add_argument("--ops", type=_csv_list)

    sp = common(sub.add_parser("fourier", help="momentum-space checks of a table"))
    sp.add_argument("--table")
    sp.add_argument("--checks", type=_csv_list)
    sp.add_argument("--beta", type=float)

    sp = common(sub.add_parser("gs-calibrate", help="Griffiths-Simon block calibration"))
    sp.add_argument("--lam", "--lambda", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--Ns", "--N", type=lambda s: [int(v) for v in _csv_list(s)])

    sp = sub.add_parser("run", help="run the pipeline named in a config file")
    sp.add_argument("config")
    sp.add_argument("--out", default="out")
    sp.add_argument("--report")

    sp = sub.add_parser("replay", help="re-run a report and compare hashes")
    sp.add_argument("report")
    return p


def _flags_to_config(ns: argparse.Namespace) -> dict:
    cfg: dict[str, Any] = {"pipeline": ns.command}
    if ns.seed is not None:
        cfg["seed"] = ns.seed

    def put(section, key, value):
        if value is not None:
            cfg.setdefault(section, {})[key] = value

    if ns.command in ("sample-currents", "spins"):
        if ns.torus is not None:
            put("model", "d", ns.torus[0])
            put("model", "L", ns.torus[1])
        for key, value in (ns.site_model or {}).items():
            put("model", key, value)
        for key in ("d", "L", "beta", "J", "edges", "site", "N", "lam", "b"):
            put("model", key, getattr(ns, key, None))
    for key in ("chains", "sweeps", "blocks"):
        put("sampling", key, getattr(ns, key, None))
    cmd = ns.command
    if cmd == "exact-verify":
        put("exact", "suites", ns.suites)
        put("exact", "max_vertices", ns.max_vertices)
        put("exact", "fuzz", ns.fuzz)
        put("exact", "max_edges", ns.max_edges)
    elif cmd == "sample-currents":
        pairs = ns.pairs
        if pairs is None and ns.sources:
            pts = sorted({v for src in ns.sources for v in src})
            pairs = [[a, b] for i, a in enumerate(pts) for b in pts[i + 1:]]
        put("currents", "pairs", pairs)
        put("currents", "sources", ns.sources)
        put("currents", "dump", ns.dump)
    elif cmd == "spins":
        put("spins", "table", ns.table)
        measures = set(ns.measure or [])
        unknown = measures - {"twopoint", "u4", "smeared"}
        if unknown:
            raise ConfigError(f"unknown measurements {sorted(unknown)}")
        profile = ns.profile_file or ns.profile
        if ns.smear_scale is not None or profile is not None or "smeared" in measures:
            put("spins", "smear", {k: v for k, v in (("scale", ns.smear_scale), ("profile", profile))
                                   if v is not None})
        if "u4" in measures:
            put("spins", "quadruples", "plaquette")
    elif cmd == "diagrams":
        put("diagrams", "table", ns.table)
        put("diagrams", "ops", ns.ops)
    elif cmd == "fourier":
        put("fourier", "table", ns.table)
        put("fourier", "checks", ns.checks)
        put("fourier", "beta", ns.beta)
    elif cmd == "gs-calibrate":
        if ns.lam is not None or ns.b is not None:
            put("gs", "targets", [[ns.lam if ns.lam is not None else 1.0, ns.b if ns.b is not None else 0.0]])
        put("gs", "Ns", ns.Ns)
    return cfg


def _out_paths(ns: argparse.Namespace, cfg: dict) -> tuple[Path, Path | None]:
    """--out may name a directory, a .json report, or (for spins) the .csv table."""
    out = Path(ns.out)
    report = Path(ns.report) if ns.report else None
    if out.suffix == ".json":
        return out.parent, report or out
    if out.suffix == ".csv" and cfg.get("pipeline") == "spins":
        cfg.setdefault("spins", {}).setdefault("table", out.name)
        return out.parent, report
    return out, report


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "replay":
            res = replay(ns.report)
            print(json.dumps(res, indent=2))
            return EXIT_OK if res["identical"] else EXIT_EXACT
        if ns.command == "run":
            cfg = load_config(ns.config)
        else:
            cfg = _flags_to_config(ns)
            if ns.config:
                file_cfg = load_config(ns.config)
                file_cfg.pop("pipeline", None)
                cfg = deep_merge(cfg, file_cfg)
        report = execute(cfg, *_out_paths(ns, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for a in report["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}")
    print(f"report: {report['report_path']}")
    return report["exit_code"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
