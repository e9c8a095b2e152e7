"""Config-driven experiment runners and deterministic CSV / JSON reporting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .cell_solver import CellProblem, Linear, Quantization, Schedule, Step, solve, \
    solve_chain_with_fidelity
from .config import ExperimentConfig
from .errors import ConfigError
from .geometry import box_domain, rotated_rectangle
from .homogenize import (
    CellSettings,
    EpsilonSurface,
    EpsilonVolume,
    IntegrandPair,
    cell_value,
    extrapolate,
    f_hom_infinity,
    tabulate_f_hom,
    tabulate_g_hom,
)
from .integrands import (
    SampleSpec,
    SurfaceIntegrand,
    VolumeIntegrand,
    check_surface_admissibility,
    check_volume_admissibility,
    make_surface,
    make_volume,
)
from .parallel import parallel_map
from .stochastic import ergodic_estimate, make_ensemble, process_surface, process_volume, \
    sub_seeds

HOMOGENIZE_COLUMNS = ("formula", "param", "r", "value", "normalized", "limit", "spread")
STOCHASTIC_COLUMNS = ("process", "r", "omega", "value", "normalized")
GAMMA_COLUMNS = ("epsilon", "inf_eps", "min_hom", "gap", "argmin_l1")


# ---------------------------------------------------------------------------
# shared plumbing


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _fmt(v) -> str:
    a = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    return " ".join(_num(x) for x in a)


def metadata(cfg: ExperimentConfig, experiment: str) -> dict[str, str]:
    return {"generator": f"fdhom {__version__}", "experiment": experiment,
            "config_sha256": cfg.digest(), "seed": str(cfg.seed)}


def render_csv(meta: dict[str, str], columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if c is None else c if isinstance(c, str) else _num(c) for c in row])
    return buf.getvalue()


def write_artifacts(out_dir: Path, name: str, meta: dict, columns, rows, summary: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(render_csv(meta, columns, rows))
    json_path = out_dir / f"{name}.json"
    json_path.write_text(json.dumps({"meta": meta, "summary": summary}, sort_keys=True,
                                    indent=2, default=_jsonable) + "\n")
    return [csv_path, json_path]


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def build_pair(cfg: ExperimentConfig) -> tuple[VolumeIntegrand, SurfaceIntegrand]:
    cfg.require("volume", "surface")
    n = cfg.discretization.n
    try:
        f = make_volume(cfg.volume.family, cfg.volume.params, dims=(1, n),
                        constants=cfg.volume.constants or None)
    except ConfigError as exc:
        raise ConfigError(exc.message, f"volume.{exc.path}") from exc
    try:
        g = make_surface(cfg.surface.family, cfg.surface.params, dims=(1, n),
                         constants=cfg.surface.constants or None)
    except ConfigError as exc:
        raise ConfigError(exc.message, f"surface.{exc.path}") from exc
    return f, g


def cell_settings(cfg: ExperimentConfig, **over) -> CellSettings:
    d = cfg.discretization
    quant = Quantization(levels=d.levels, span_factor=d.span_factor, min_span=d.min_span,
                         anchors=d.anchors)
    sched = Schedule(sweeps=d.sweeps, restarts=d.restarts, seed=cfg.seed % 2**32)
    kw = dict(h=d.h, quant=quant, solver=d.solver, schedule=sched, bc_width=d.bc_width,
              scaling=d.scaling)
    kw.update(over)
    return CellSettings(**kw)


def _vector(v, n: int, path: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size != n:
        raise ConfigError(f"expected {n} components, got {a.size}", path)
    return a


# ---------------------------------------------------------------------------
# check


def run_check(cfg: ExperimentConfig) -> tuple[str, bool, dict]:
    f, g = build_pair(cfg)
    n = cfg.discretization.n
    spec = SampleSpec.grid(n, 1, seed=cfg.seed % 2**32, **cfg.check)
    rv = check_volume_admissibility(f, spec)
    rs = check_surface_admissibility(g, spec)
    text = rv.summary() + "\n" + rs.summary() + "\n"
    summary = {"volume": {k: v.passed for k, v in rv.verdicts.items()},
               "surface": {k: v.passed for k, v in rs.verdicts.items()},
               "notes": rv.notes + rs.notes}
    return text, rv.passed and rs.passed, summary


# ---------------------------------------------------------------------------
# cell-solve


def run_cell_solve(cfg: ExperimentConfig) -> tuple[list[list], dict, Any]:
    cfg.require("cell_solve")
    c = cfg.cell_solve
    f, g = build_pair(cfg)
    pair = IntegrandPair.build(f, g)
    n = cfg.discretization.n
    nu = None if c.nu is None else _vector(c.nu, n, "cell_solve.nu")
    x0 = np.zeros(n) if c.x0 is None else _vector(c.x0, n, "cell_solve.x0")
    dom = rotated_rectangle(x0, c.r, c.k, nu, cfg.discretization.h, cfg.discretization.bc_width)
    if c.datum == "linear":
        datum = Linear(_vector(c.xi, n, "cell_solve.xi").reshape(1, n))
    else:
        datum = Step(x0, np.atleast_1d(c.zeta), dom.nu)
    vol, surf = pair.select(c.pair)
    p = CellProblem(c.pair, vol, surf, dom, datum, c.bc_mode)
    s = cell_settings(cfg)
    res = solve(p, s.quant, s.solver, s.schedule)
    summary = {"value": res.value, "exact": res.exact, "cells": int(np.prod(dom.shape)),
               "solver": res.meta.get("solver"), "pair": c.pair, "datum": c.datum, "r": c.r}
    return [], summary, res.argmin


# ---------------------------------------------------------------------------
# homogenize


@dataclass(frozen=True)
class _CellTask:
    formula: str
    pair: IntegrandPair
    param: Any
    r: float
    x: Any
    nu: Any
    k: int
    settings: CellSettings


def _run_cell_task(t: _CellTask):
    raw, norm, _ = cell_value(t.formula, t.pair, t.param, t.r, t.x, t.nu, t.k, t.settings)
    return raw, norm


def homogenize_rows(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[list], dict]:
    cfg.require("homogenize")
    hs = cfg.homogenize
    f, g = build_pair(cfg)
    pair = IntegrandPair.build(f, g)
    n = cfg.discretization.n
    settings = cell_settings(cfg, tail_window=hs.tail_window, spread_tol=hs.spread_tol,
                             bc_mode=hs.bc_mode)
    x = None if hs.x is None else _vector(hs.x, n, "homogenize.x")
    nus = [None] if hs.nu is None else [_vector(v, n, "homogenize.nu") for v in hs.nu]
    rs = [float(r) for r in hs.r_schedule]
    jobs: list[tuple[str, str, Any, Any]] = []  # (formula, label, param, nu)
    for formula in hs.formulas:
        if formula == "g_hom":
            for nu in nus:
                for z in hs.zeta:
                    zeta = np.atleast_1d(np.asarray(z, dtype=float))
                    nu_v = np.eye(n)[-1] if nu is None else nu
                    jobs.append((formula, f"zeta={_fmt(zeta)};nu={_fmt(nu_v)}", zeta, nu))
        else:
            for v in hs.xi:
                xi = _vector(v, n, "homogenize.xi").reshape(1, n)
                jobs.append((formula, f"xi={_fmt(xi)}", xi, nus[0]))
    cell_jobs = [j for j in jobs if not (j[0] == "f_hom_inf" and hs.route == "recession")]
    tasks = [_CellTask(fm, pair, p, r, x, nu, hs.k, settings) for fm, _, p, nu in cell_jobs
             for r in rs]
    results = iter(parallel_map(_run_cell_task, tasks, workers))
    rows, summary = [], {}
    window = settings.window(n)
    for fm, label, p, nu in jobs:
        if fm == "f_hom_inf" and hs.route == "recession":
            ex = f_hom_infinity(pair, None, p, rs, route="recession", x=x, nu=nu, k=hs.k,
                                settings=settings)
            for t, v in ex.samples:
                rows.append([fm, label + ";route=recession", t, None, v, None, None])
        else:
            samples = []
            for r in rs:
                raw, norm = next(results)
                samples.append((r, norm))
                rows.append([fm, label, r, raw, norm, None, None])
            ex = extrapolate(samples, window, settings.spread_tol)
        rows.append([fm, label, "limit", None, None, ex.limit, ex.spread])
        summary[f"{fm}:{label}"] = {"limit": ex.limit, "spread": ex.spread,
                                    "flagged": ex.flagged}
    return rows, summary


# ---------------------------------------------------------------------------
# stochastic


def _surface_task(args):
    proc, seed = args
    return proc.evaluate(proc.ensemble.omega(seed))


def stochastic_rows(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[list], dict]:
    cfg.require("stochastic")
    st = cfg.stochastic
    ens = make_ensemble(st.ensemble.model_dump(exclude_none=True), cfg.seed)
    n = ens.n
    d = cfg.discretization
    quant = Quantization(levels=d.levels, span_factor=d.span_factor, min_span=d.min_span,
                         anchors=d.anchors)
    kw = dict(h=st.h, quant=quant, solver=d.solver,
              schedule=Schedule(sweeps=d.sweeps, restarts=d.restarts, seed=cfg.seed % 2**32))
    nu = None if st.nu is None else _vector(st.nu, n, "stochastic.nu")
    if st.process == "volume":
        proc = process_volume(ens, _vector(st.xi, n, "stochastic.xi"), nu, **kw)
    else:
        proc = process_surface(ens, np.atleast_1d(st.zeta), nu, c=st.c, **kw)
    rows = []
    if proc.dim == 0:
        seeds = sub_seeds(cfg.seed, st.n_omega)
        vals = parallel_map(_surface_task, [(proc, s) for s in seeds], workers)
        for i, v in enumerate(vals):
            rows.append([st.process, 1, i, v, v])
        arr = np.array(vals)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        rows.append([st.process, 1, "mean", None, float(arr.mean())])
        rows.append([st.process, 1, "std", None, std])
        return rows, {"dim": 0, "mean": float(arr.mean()), "std": std,
                      "note": proc.meta.get("note", "")}
    est = ergodic_estimate(proc, st.r_schedule, st.n_omega, cfg.seed, workers, st.tail_window)
    for j, r in enumerate(est.r):
        scale = float(r) ** proc.dim
        for i in range(st.n_omega):
            rows.append([st.process, r, i, est.values[j, i] * scale, est.values[j, i]])
        rows.append([st.process, r, "mean", None, est.mean[j]])
        rows.append([st.process, r, "std", None, est.std[j]])
    rows.append([st.process, "limit", "mean", None, est.limit])
    return rows, {"dim": proc.dim, "r": est.r, "mean": est.mean, "std": est.std,
                  "limit": est.limit, "spread": est.spread, "multiplier": proc.multiplier}


# ---------------------------------------------------------------------------
# gamma: convergence of minima with an L1 fidelity


@dataclass(frozen=True)
class MinimaConvergenceRow:
    epsilon: float
    inf_eps: float
    min_hom: float
    gap: float
    argmin_l1: float

    def __post_init__(self):
        vals = (self.inf_eps, self.min_hom, self.gap, self.argmin_l1)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"non-finite or negative entry in {self}")


def _integer_ratio(a: float, b: float, what: str, path: str) -> int:
    q = a / b
    k = round(q)
    if k < 1 or abs(q - k) > 1e-9 * max(1.0, q):
        raise ConfigError(f"{what} ({a} / {b} = {q}) is not an integer", path)
    return int(k)


def gamma_minima_experiment(f: VolumeIntegrand, g: SurfaceIntegrand, target_position: float,
                            low: float, high: float, epsilons: Sequence[float],
                            interval: tuple[float, float] = (0.0, 3.0), *,
                            cells_per_period: int = 8, levels: int = 61, span: float = 1.5,
                            hom_r_schedule=(4, 8, 16, 32, 64), hom_xi=(0.5, 1.0, 2.0, 4.0),
                            hom_zeta=(0.5, 1.0, 2.0), hom_settings: CellSettings = CellSettings(),
                            ) -> tuple[list[MinimaConvergenceRow], dict]:
    """Exact DP minima of ``E_eps + L1`` against ``E_hom + L1`` for a step target (1D)."""
    if f.dims[1] != 1:
        raise ConfigError("the minima experiment is one-dimensional", "discretization.n")
    a, b = interval
    spacings = []
    for i, eps in enumerate(epsilons):
        _integer_ratio(1.0, eps, "1/epsilon", f"gamma.epsilons[{i}]")
        hs = eps / cells_per_period
        _integer_ratio(b - a, hs, "interval length / spacing", f"gamma.epsilons[{i}]")
        spacings.append(hs)
    h_fine = min(spacings)
    center = 0.5 * (low + high)
    width = span * max(abs(high - low), 1e-12)
    grid = center + width / (levels - 1) * (np.arange(levels) - (levels - 1) // 2)

    def problem(hs: float):
        dom = box_domain(np.eye(1), [a], [b], hs)
        x = dom.cell_centers[..., 0]
        return dom, np.where(x >= target_position, high, low)

    pair = IntegrandPair.build(f, g)
    fh = tabulate_f_hom(pair, None, [s * v for v in hom_xi for s in (-1, 1)], hom_r_schedule,
                        settings=hom_settings)
    gh = tabulate_g_hom(pair, None, [s * v for v in hom_zeta for s in (-1, 1)], [[1.0]],
                        hom_r_schedule, settings=hom_settings)
    dom_h, target_h = problem(h_fine)
    hom = solve_chain_with_fidelity(fh.as_integrand(), gh.as_integrand(), dom_h, target_h, grid)
    u_hom = hom.argmin.values[:, 0]

    rows, argmins = [], {}
    for eps, hs in zip(epsilons, spacings):
        dom, target = problem(hs)
        fe = VolumeIntegrand(EpsilonVolume(f.func, 1.0 / eps), f.constants, f.dims,
                             f.one_homogeneous, f.x_independent, f"{f.name}(x/eps)")
        ge = SurfaceIntegrand(EpsilonSurface(g.func, 1.0 / eps), g.constants, g.dims,
                              g.one_homogeneous, g.x_independent, f"{g.name}(x/eps)")
        res = solve_chain_with_fidelity(fe, ge, dom, target, grid)
        u = np.repeat(res.argmin.values[:, 0], int(round(hs / h_fine)))
        l1 = float(h_fine * np.sum(np.abs(u - u_hom)))
        gap = abs(res.value - hom.value) / max(abs(hom.value), 1e-300)
        rows.append(MinimaConvergenceRow(float(eps), float(res.value), float(hom.value),
                                         float(gap), l1))
        argmins[float(eps)] = res.argmin
    infs = [r.inf_eps for r in rows]
    summary = {"min_hom": hom.value, "inf_eps": infs,
               "sandwich": [min(infs), max(infs)],
               "f_hom": {str(k): e.limit for k, e in fh.entries.items()},
               "g_hom": {str(k): e.limit for k, e in gh.entries.items()},
               "grid_levels": levels, "h_fine": h_fine}
    return rows, summary


def gamma_rows(cfg: ExperimentConfig) -> tuple[list[list], dict]:
    cfg.require("gamma")
    gm = cfg.gamma
    f, g = build_pair(cfg)
    settings = cell_settings(cfg)
    rows, summary = gamma_minima_experiment(
        f, g, gm.target.position, gm.target.low, gm.target.high, gm.epsilons, gm.interval,
        cells_per_period=gm.cells_per_period, levels=gm.levels, span=gm.span,
        hom_r_schedule=gm.hom_r_schedule, hom_xi=gm.hom_xi, hom_zeta=gm.hom_zeta,
        hom_settings=settings)
    return [[r.epsilon, r.inf_eps, r.min_hom, r.gap, r.argmin_l1] for r in rows], summary
