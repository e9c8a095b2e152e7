"""Cell formulas for the homogenised volume, surface and recession densities.

Each formula solves one cell problem per side length ``r`` of a schedule,
normalises the minimum by the cell measure and extrapolates with the mean of
the last few entries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .cell_solver import CellProblem, Linear, Quantization, Schedule, Step, solve
from .errors import PreconditionError
from .fields import BVTestFunction1D
from .geometry import rotated_rectangle
from .integrands import (
    AdmissibilityReport,
    IntegrandConstants,
    PropertyVerdict,
    SurfaceIntegrand,
    VolumeIntegrand,
    derivative_at_zero,
    matrix_norm,
    pair_constants,
    recession,
    vector_norm,
)

FORMULAS = ("f_hom", "g_hom", "f_hom_inf")


@dataclass
class ExtrapolationResult:
    samples: list[tuple[float, float]]
    limit: float
    spread: float
    tail_window: int
    flagged: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rs = [r for r, _ in self.samples]
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("samples must be strictly increasing in r")


def extrapolate(samples: Sequence[tuple[float, float]], tail_window: int,
                spread_tol: float | None = None, meta: dict | None = None) -> ExtrapolationResult:
    tail = [v for _, v in samples[-tail_window:]]
    spread = float(max(tail) - min(tail))
    limit = float(np.mean(tail))
    flagged = spread_tol is not None and spread > spread_tol * max(abs(limit), 1e-300)
    return ExtrapolationResult(list(samples), limit, spread, tail_window, flagged, meta or {})


# ---------------------------------------------------------------------------
# settings and derived pairs


@dataclass(frozen=True)
class CellSettings:
    """Discretisation knobs shared by every cell problem of a sweep.

    ``scaling="epsilon"`` solves on the unit cell with oscillation scale
    ``1/r`` instead of on the growing cell; both give the same normalised
    numbers up to rounding.
    """

    h: float = 0.125
    quant: Quantization = Quantization()
    solver: str = "auto"
    schedule: Schedule = Schedule()
    bc_width: float | None = None
    scaling: str = "domain"
    tail_window: int | None = None
    spread_tol: float | None = None
    bc_mode: str = "full"

    def window(self, n: int) -> int:
        return self.tail_window or (3 if n == 1 else 2)


@dataclass(frozen=True)
class EpsilonVolume:
    base: Any
    r: float

    def __call__(self, x, xi):
        return self.base(self.r * x, xi)


@dataclass(frozen=True)
class EpsilonSurface:
    base: Any
    r: float

    def __call__(self, x, zeta, nu):
        return self.base(self.r * x, zeta, nu)


def _oscillating(f: VolumeIntegrand, g: SurfaceIntegrand, r: float):
    return (replace(f, func=EpsilonVolume(f.func, r)), replace(g, func=EpsilonSurface(g.func, r)))


@dataclass(frozen=True, eq=False)
class IntegrandPair:
    """An admissible pair together with its recession and small-jump derivatives."""

    f: VolumeIntegrand
    g: SurfaceIntegrand
    f_inf: VolumeIntegrand
    g0: SurfaceIntegrand

    @classmethod
    def build(cls, f: VolumeIntegrand, g: SurfaceIntegrand,
              recession_t: Sequence[float] = (1e2, 1e3, 1e4),
              derivative_t: Sequence[float] = (1e-4, 1e-6, 1e-8)) -> "IntegrandPair":
        return cls(f, g, recession(f, recession_t), derivative_at_zero(g, derivative_t))

    @property
    def constants(self) -> IntegrandConstants:
        return pair_constants(self.f, self.g)

    def select(self, kind: str) -> tuple[VolumeIntegrand, SurfaceIntegrand]:
        return {
            "F_G0": (self.f, self.g0),
            "FINF_G": (self.f_inf, self.g),
            "FINF_G0": (self.f_inf, self.g0),
            "F_G": (self.f, self.g),
        }[kind]


_KIND = {"f_hom": "F_G0", "g_hom": "FINF_G", "f_hom_inf": "FINF_G0"}


def _as_pair(f, g) -> IntegrandPair:
    return f if isinstance(f, IntegrandPair) else IntegrandPair.build(f, g)


def _default_nu(n: int) -> np.ndarray:
    return np.eye(n)[-1]


def cell_problem(formula: str, pair: IntegrandPair, param, r: float, x=None, nu=None, k: int = 1,
                 settings: CellSettings = CellSettings()) -> tuple[CellProblem, Quantization, float]:
    """Cell problem of one schedule entry and its normalisation."""
    if formula not in FORMULAS:
        raise PreconditionError(f"formula must be one of {FORMULAS}")
    n = pair.f.dims[1]
    x = np.zeros(n) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    nu = _default_nu(n) if nu is None else np.atleast_1d(np.asarray(nu, dtype=float))
    vol, surf = pair.select(_KIND[formula])
    quant = settings.quant
    if formula == "g_hom":
        k = 1
    if settings.scaling == "epsilon":
        vol, surf = _oscillating(vol, surf, r)
        side, center, h = 1.0, x, settings.h / r
        bc = None if settings.bc_width is None else settings.bc_width / r
        if formula != "g_hom":
            quant = replace(quant, min_span=quant.min_span / r)
        norm = float(k) ** (n - 1) if formula != "g_hom" else 1.0
    elif settings.scaling == "domain":
        side, center, h, bc = r, r * x, settings.h, settings.bc_width
        norm = float(k) ** (n - 1) * r**n if formula != "g_hom" else r ** (n - 1)
    else:
        raise PreconditionError("scaling must be 'domain' or 'epsilon'")
    dom = rotated_rectangle(center, side, k, nu, h, bc)
    if formula == "g_hom":
        datum = Step(center, param, nu)
        bc_mode = "full"
    else:
        datum = Linear(param)
        bc_mode = settings.bc_mode if formula == "f_hom_inf" else "full"
    return CellProblem(_KIND[formula], vol, surf, dom, datum, bc_mode), quant, norm


def cell_value(formula: str, pair: IntegrandPair, param, r: float, x=None, nu=None, k: int = 1,
               settings: CellSettings = CellSettings()) -> tuple[float, float, bool]:
    """(raw minimum, normalised value, exact flag) for one schedule entry."""
    prob, quant, norm = cell_problem(formula, pair, param, r, x, nu, k, settings)
    res = solve(prob, quant, settings.solver, settings.schedule)
    return res.value, res.value / norm, res.exact


def _param_matrix(xi, n: int) -> np.ndarray:
    a = np.asarray(xi, dtype=float)
    return a.reshape(1, n) if a.size == n else a.reshape(-1, n)


def _formula(formula, pair: IntegrandPair, param, r_schedule, x, nu, k, settings
             ) -> ExtrapolationResult:
    rs = [float(r) for r in r_schedule]
    if len(rs) < 3:
        raise PreconditionError("r_schedule needs at least 3 entries")
    samples, exact = [], True
    for r in rs:
        _, v, ex = cell_value(formula, pair, param, r, x, nu, k, settings)
        samples.append((r, v))
        exact &= ex
    n = pair.f.dims[1]
    return extrapolate(samples, settings.window(n), settings.spread_tol,
                       {"formula": formula, "exact": exact, "k": k})


def f_hom(f, g, xi, r_schedule=(4, 8, 16, 32, 64), x=None, nu=None, k: int = 1,
          settings: CellSettings = CellSettings()) -> ExtrapolationResult:
    """Volume density: minimum with affine data, per unit volume, along the schedule."""
    pair = _as_pair(f, g)
    return _formula("f_hom", pair, _param_matrix(xi, pair.f.dims[1]), r_schedule, x, nu, k, settings)


def g_hom(f, g, zeta, nu=None, r_schedule=(4, 8, 16, 32, 64), x=None,
          settings: CellSettings = CellSettings()) -> ExtrapolationResult:
    """Surface density: minimum with step data, per unit interface area."""
    pair = _as_pair(f, g)
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    return _formula("g_hom", pair, zeta, r_schedule, x, nu, 1, settings)


def f_hom_infinity(f, g, xi, r_schedule=(4, 8, 16, 32, 64), route: str = "cell", x=None, nu=None,
                   k: int = 1, settings: CellSettings = CellSettings(),
                   t_schedule: Sequence[float] = (1.0, 1e1, 1e2, 1e3)) -> ExtrapolationResult:
    """Recession of the homogenised volume density, by cell formula or by recession."""
    pair = _as_pair(f, g)
    n = pair.f.dims[1]
    xi_m = _param_matrix(xi, n)
    if route == "cell":
        return _formula("f_hom_inf", pair, xi_m, r_schedule, x, nu, k, settings)
    if route != "recession":
        raise PreconditionError("route must be 'cell' or 'recession'")
    ts = [float(t) for t in t_schedule]
    if len(ts) < 3 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise PreconditionError("t_schedule needs >= 3 increasing entries")
    table = tabulate_f_hom(pair, None, [t * xi_m for t in ts], r_schedule, x=x, nu=nu, k=k,
                           settings=settings, one_homogeneous=False, include_zero=False)
    vals = [table.entries[_key(t * xi_m)].limit for t in ts]
    # secant slopes cancel the O(1) offset that f_hom(t xi) / t carries
    samples = [(t1, (v1 - v0) / (t1 - t0)) for t0, t1, v0, v1 in zip(ts, ts[1:], vals, vals[1:])]
    return ExtrapolationResult(samples, samples[-1][1], abs(samples[-1][1] - samples[-2][1]), 1,
                               False, {"formula": "f_hom_inf", "route": "recession",
                                       "t_schedule": ts, "values": vals})


# ---------------------------------------------------------------------------
# tabulated homogenised densities


def _key(a) -> tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(a, dtype=float).ravel())


@dataclass(frozen=True)
class RayTable:
    """Values along rays through the origin, linear in the radius."""

    directions: tuple[tuple[float, ...], ...]
    radii: tuple[tuple[float, ...], ...]
    values: tuple[tuple[float, ...], ...]
    at_zero: float | None
    one_homogeneous: bool

    @classmethod
    def from_points(cls, points: Mapping[tuple, float], one_homogeneous: bool) -> "RayTable":
        rays: dict[tuple, list[tuple[float, float]]] = {}
        zero = None
        for key, val in points.items():
            v = np.asarray(key)
            rad = float(np.linalg.norm(v))
            if rad == 0:
                zero = float(val)
                continue
            d = _key(np.round(v / rad, 12) + 0.0)
            rays.setdefault(d, []).append((rad, float(val)))
        if zero is None and one_homogeneous:
            zero = 0.0
        dirs = tuple(sorted(rays))
        rad = tuple(tuple(r for r, _ in sorted(rays[d])) for d in dirs)
        val = tuple(tuple(v for _, v in sorted(rays[d])) for d in dirs)
        return cls(dirs, rad, val, zero, one_homogeneous)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        """Evaluate at points ``a[..., dim]``."""
        a = np.asarray(a, dtype=float)
        rad = np.linalg.norm(a, axis=-1) if a.shape[-1] > 1 else np.abs(a[..., 0])
        out = np.full(rad.shape, np.nan)
        if self.at_zero is not None:
            out[rad == 0] = self.at_zero
        safe = np.where(rad > 0, rad, 1.0)[..., None]
        unit = a / safe
        for d, rs, vs in zip(self.directions, self.radii, self.values):
            hit = (rad > 0) & np.all(np.abs(unit - np.asarray(d)) <= 1e-9, axis=-1)
            if not hit.any():
                continue
            r = rad[hit]
            rs_a, vs_a = np.asarray(rs), np.asarray(vs)
            if self.at_zero is not None:
                rs_a, vs_a = np.concatenate([[0.0], rs_a]), np.concatenate([[self.at_zero], vs_a])
            vals = np.interp(r, rs_a, vs_a)
            beyond = r > rs_a[-1]
            if beyond.any():
                if not self.one_homogeneous:
                    raise ValueError(f"argument radius {r[beyond].max()} outside the tabulation")
                vals = np.where(beyond, vs_a[-1] * r / rs_a[-1], vals)
            below = r < rs_a[0]
            if below.any():
                raise ValueError("argument below the tabulated radii and no value at 0")
            out[hit] = vals
        if np.isnan(out).any():
            raise ValueError("argument direction not tabulated")
        return out


@dataclass(frozen=True)
class TabulatedVolumeKernel:
    table: RayTable

    def __call__(self, x, xi):
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(xi.shape[:-2] + (-1,))
        return self.table(flat)


@dataclass(frozen=True)
class TabulatedSurfaceKernel:
    tables: tuple[tuple[tuple[float, ...], RayTable], ...]  # (nu, table over zeta)

    def __call__(self, x, zeta, nu):
        zeta = np.asarray(zeta, dtype=float)
        nu = np.broadcast_to(np.asarray(nu, dtype=float), zeta.shape[:-1] + (np.shape(nu)[-1],))
        out = np.full(zeta.shape[:-1], np.nan)
        for key, table in self.tables:
            hit = np.all(np.abs(nu - np.asarray(key)) <= 1e-9, axis=-1)
            if hit.any():
                out[hit] = table(zeta[hit])
        if np.isnan(out).any():
            raise ValueError("interface normal not tabulated")
        return out


@dataclass
class HomogenizedVolume:
    entries: dict[tuple, ExtrapolationResult]
    dims: tuple[int, int]
    constants: IntegrandConstants
    one_homogeneous: bool = False

    def table(self) -> RayTable:
        return RayTable.from_points({k: e.limit for k, e in self.entries.items()},
                                    self.one_homogeneous)

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.table()(xi.reshape(xi.shape[:-2] + (-1,)) if xi.ndim >= 2 else xi[..., None])

    def as_integrand(self) -> VolumeIntegrand:
        return VolumeIntegrand(TabulatedVolumeKernel(self.table()), self.constants, self.dims,
                               one_homogeneous=self.one_homogeneous, x_independent=True,
                               name="f_hom")


@dataclass
class HomogenizedSurface:
    entries: dict[tuple[tuple, tuple], ExtrapolationResult]  # (zeta, nu) -> result
    dims: tuple[int, int]
    constants: IntegrandConstants
    one_homogeneous: bool = False

    def tables(self) -> tuple[tuple[tuple[float, ...], RayTable], ...]:
        by_nu: dict[tuple, dict[tuple, float]] = {}
        for (z, nu), e in self.entries.items():
            by_nu.setdefault(nu, {})[z] = e.limit
        return tuple((nu, RayTable.from_points({**pts, (0.0,) * self.dims[0]: 0.0},
                                               self.one_homogeneous))
                     for nu, pts in sorted(by_nu.items()))

    def __call__(self, zeta, nu) -> np.ndarray:
        return TabulatedSurfaceKernel(self.tables())(None, np.atleast_1d(zeta), nu)

    def as_integrand(self) -> SurfaceIntegrand:
        return SurfaceIntegrand(TabulatedSurfaceKernel(self.tables()), self.constants, self.dims,
                                one_homogeneous=self.one_homogeneous, x_independent=True,
                                name="g_hom")


def tabulate_f_hom(f, g, xis: Iterable | None = None, r_schedule=(4, 8, 16, 32, 64), *, x=None,
                   nu=None, k: int = 1, settings: CellSettings = CellSettings(),
                   one_homogeneous: bool | None = None, include_zero: bool = True
                   ) -> HomogenizedVolume:
    pair = _as_pair(f, g)
    n = pair.f.dims[1]
    pts = [_param_matrix(v, n) for v in xis]
    if include_zero and not any(not np.any(p) for p in pts):
        pts = [np.zeros_like(pts[0])] + pts
    entries = {}
    for p in pts:
        entries[_key(p)] = _formula("f_hom", pair, p, r_schedule, x, nu, k, settings)
    homog = pair.f.one_homogeneous if one_homogeneous is None else one_homogeneous
    return HomogenizedVolume(entries, pair.f.dims, pair.constants, homog)


def tabulate_g_hom(f, g, zetas: Iterable, nus: Iterable | None = None, r_schedule=(4, 8, 16, 32, 64),
                   *, x=None, settings: CellSettings = CellSettings()) -> HomogenizedSurface:
    pair = _as_pair(f, g)
    n = pair.f.dims[1]
    nus = [_default_nu(n)] if nus is None else [np.atleast_1d(np.asarray(v, dtype=float)) for v in nus]
    entries = {}
    for nu in nus:
        for z in zetas:
            z = np.atleast_1d(np.asarray(z, dtype=float))
            entries[(_key(z), _key(nu))] = _formula("g_hom", pair, z, r_schedule, x, nu, 1, settings)
    return HomogenizedSurface(entries, pair.g.dims, pair.constants, True)


# ---------------------------------------------------------------------------
# closure checks on tabulations


def _rel_tol(a, tol):
    return tol * (1.0 + np.abs(a))


def volume_closure_report(fh: HomogenizedVolume, constants: IntegrandConstants | None = None,
                          tol: float = 1e-9) -> AdmissibilityReport:
    """Continuity estimate and linear bounds on every tabulated pair / point."""
    k = constants or fh.constants
    rep = AdmissibilityReport("homogenised volume", "f_hom")
    keys = list(fh.entries)
    xi = np.array(keys)
    val = np.array([fh.entries[q].limit for q in keys])
    norm = np.linalg.norm(xi, axis=-1)
    d = np.linalg.norm(xi[:, None] - xi[None], axis=-1)
    lhs = np.abs(val[:, None] - val[None])
    rhs = k.sigma1(d) * (val[:, None] + val[None]) + k.c1 * d
    rep.add(_table_verdict("f2", lhs - rhs, rhs, tol, lambda i: {"xi1": keys[i[0]], "xi2": keys[i[1]]}))
    rep.add(_table_verdict("f3", k.c2 * norm - val, val, tol, lambda i: {"xi": keys[i[0]]}))
    rep.add(_table_verdict("f4", val - (k.c3 * norm + k.c4), val, tol, lambda i: {"xi": keys[i[0]]}))
    return rep


def surface_closure_report(gh: HomogenizedSurface, constants: IntegrandConstants | None = None,
                           tol: float = 1e-9, symmetry_tol: float = 1e-6) -> AdmissibilityReport:
    """Continuity, bounds and the ``(zeta, nu) -> (-zeta, -nu)`` symmetry."""
    k = constants or gh.constants
    rep = AdmissibilityReport("homogenised surface", "g_hom")
    keys = list(gh.entries)
    zeta = np.array([z for z, _ in keys])
    nus = [nu for _, nu in keys]
    val = np.array([gh.entries[q].limit for q in keys])
    norm = np.linalg.norm(zeta, axis=-1)
    same = np.array([[a == b for b in nus] for a in nus])
    d = np.linalg.norm(zeta[:, None] - zeta[None], axis=-1)
    lhs = np.where(same, np.abs(val[:, None] - val[None]), 0.0)
    rhs = k.sigma2(d) * (val[:, None] + val[None])
    rep.add(_table_verdict("g2", lhs - rhs, rhs, tol, lambda i: {"a": keys[i[0]], "b": keys[i[1]]}))
    rep.add(_table_verdict("g3", k.c2 * norm - val, val, tol, lambda i: {"key": keys[i[0]]}))
    rep.add(_table_verdict("g4", val - k.c3 * norm, val, tol, lambda i: {"key": keys[i[0]]}))
    sym, wit = [], []
    for (z, nu), e in gh.entries.items():
        mirror = (_key(-np.asarray(z)), _key(-np.asarray(nu)))
        if mirror in gh.entries:
            sym.append(abs(e.limit - gh.entries[mirror].limit))
            wit.append((z, nu))
    if not sym:
        rep.notes.append("no mirrored (zeta, nu) pairs tabulated; symmetry not checked")
        sym, wit = [0.0], [None]
    sym = np.array(sym)
    rep.add(_table_verdict("g6", sym, np.zeros_like(sym), symmetry_tol,
                           lambda i: {"key": wit[i[0]]}))
    return rep


def _table_verdict(name, violation, scale, tol, witness):
    violation = np.atleast_1d(violation)
    excess = violation - _rel_tol(scale, tol)
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    ok = bool(excess[i] <= 0)
    return PropertyVerdict(name, ok, float(max(violation[i], 0.0)), {} if ok else witness(i))


# ---------------------------------------------------------------------------
# invariance and the homogenised functional


def invariance_diagnostics(formula: str, f, g, param, r_schedule, *, xs=None, nus=None, ks=None,
                           settings: CellSettings = CellSettings()) -> dict:
    """Limits over the grid of (x, nu, k) and the max relative spread per axis."""
    pair = _as_pair(f, g)
    n = pair.f.dims[1]
    axes = {
        "x": [np.atleast_1d(np.asarray(v, dtype=float)) for v in (xs or [np.zeros(n)])],
        "nu": [np.atleast_1d(np.asarray(v, dtype=float)) for v in (nus or [_default_nu(n)])],
        "k": list(ks or [1]),
    }
    if formula == "g_hom":
        axes["k"] = [1]
    if all(len(v) < 2 for v in axes.values()):
        raise PreconditionError("vary at least one of x, nu, k over >= 2 values")
    limits = {}
    for ix, inu, ik in itertools.product(*(range(len(v)) for v in axes.values())):
        x, nu, k = axes["x"][ix], axes["nu"][inu], axes["k"][ik]
        p = param if formula == "g_hom" else _param_matrix(param, n)
        res = _formula(formula, pair, p, r_schedule, x, nu, k, settings)
        limits[(ix, inu, ik)] = res.limit
    spreads = {}
    for pos, name in enumerate(("x", "nu", "k")):
        worst = 0.0
        others = {key[:pos] + key[pos + 1:] for key in limits}
        for o in others:
            vals = [v for key, v in limits.items() if key[:pos] + key[pos + 1:] == o]
            if len(vals) > 1:
                worst = max(worst, (max(vals) - min(vals)) / max(abs(np.mean(vals)), 1e-300))
        spreads[name] = worst
    return {"limits": {str(k): v for k, v in limits.items()}, "spread": spreads,
            "axes": {k: [np.asarray(v).tolist() for v in vals] for k, vals in axes.items()}}


def homogenized_energy(fh, gh, fhinf, u: BVTestFunction1D, interval=None) -> float:
    """Bulk + jump + Cantor parts of the homogenised functional for a 1D test function.

    ``fh``, ``gh``, ``fhinf`` may be tabulations or plain callables of the
    argument (``gh`` takes ``(zeta, nu)``).
    """
    lo, hi = interval or u.interval
    total = 0.0
    for (a, b), s in zip(zip(u.breakpoints[:-1], u.breakpoints[1:]), u.slopes):
        length = max(0.0, min(b, hi) - max(a, lo))
        if length > 0:
            total += length * float(np.asarray(fh(np.array([[s]]))).ravel()[0])
    for loc, amp in u.jumps:
        if lo < loc < hi and amp != 0:
            total += float(np.asarray(gh(np.array([amp]), np.array([1.0]))).ravel()[0])
    if u.cantor_weight:
        polar = np.array([[u.polar]])
        total += abs(u.cantor_weight) * float(np.asarray(fhinf(polar)).ravel()[0])
    return total


def bounds_check(result: ExtrapolationResult, lower: float, upper: float, tol: float = 1e-9) -> bool:
    return lower - tol * (1 + abs(lower)) <= result.limit <= upper + tol * (1 + abs(upper))


def sample_norm(param) -> float:
    a = np.asarray(param, dtype=float)
    return float(matrix_norm(a.reshape(1, -1, 1)) if a.ndim <= 1 else matrix_norm(a))


def zeta_norm(z) -> float:
    return float(vector_norm(np.atleast_1d(np.asarray(z, dtype=float))))
