"""Stationary random ensembles, subadditive processes and ergodic estimates.

A realisation is never stored: the coefficient of lattice cell ``c`` under
``omega = (seed, offset)`` is a stateless hash of ``(seed, c + offset)``, so
lattice shifts act by index translation and covariance holds bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .cell_solver import CellProblem, Linear, Quantization, Schedule, Step, solve
from .errors import ConfigError, InvalidDirectionError, PreconditionError
from .geometry import box_domain, rotation_matrix
from .homogenize import extrapolate
from .integrands import (
    IntegrandConstants,
    ScaledNormSurface,
    ScaledNormVolume,
    SurfaceIntegrand,
    VolumeIntegrand,
    derivative_at_zero,
    matrix_norm,
    recession,
    vector_norm,
)
from .integrands import _SIGMA2_STEP
from .parallel import parallel_map

KINDS = ("checkerboard", "iid_cell", "poisson_inclusion")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_VOLUME, _STREAM_SURFACE, _STREAM_CENTER = 1, 2, 3


def splitmix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def cell_uniform(seed: int, stream: int, cells: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) variate per integer cell index ``cells[..., n]``."""
    cells = np.asarray(cells, dtype=np.int64)
    h = splitmix64(np.uint64(seed % 2**64) ^ splitmix64(np.uint64(stream)))
    h = np.broadcast_to(h, cells.shape[:-1]).copy()
    for c in range(cells.shape[-1]):
        h = splitmix64(h ^ cells[..., c].view(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class CoefficientLaw:
    """Finitely supported law of a positive coefficient."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.values or len(self.values) != len(self.probs):
            raise ConfigError("law needs matching non-empty values and probabilities", "law")
        if min(self.values) <= 0 or not all(math.isfinite(v) for v in self.values):
            raise ConfigError("law values must be finite and positive", "law")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ConfigError(f"law probabilities {self.probs} are not normalised", "law")

    @classmethod
    def parse(cls, spec, path: str = "law") -> "CoefficientLaw":
        try:
            pairs = [(float(v), float(p)) for v, p in spec]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"law must be a list of (value, prob) pairs: {exc}", path) from exc
        try:
            return cls(tuple(v for v, _ in pairs), tuple(p for _, p in pairs))
        except ConfigError as exc:
            raise ConfigError(exc.message, path) from exc

    @classmethod
    def constant(cls, value: float) -> "CoefficientLaw":
        return cls((float(value),), (1.0,))

    def quantile(self, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum[:-1], u, side="right")
        return np.asarray(self.values)[idx]

    @property
    def lo(self) -> float:
        return min(v for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def hi(self) -> float:
        return max(v for v, p in zip(self.values, self.probs) if p > 0)


@dataclass(frozen=True)
class Omega:
    """Sample point: a seed and the accumulated lattice shift."""

    seed: int
    offset: tuple[int, ...]

    def shifted(self, z) -> "Omega":
        z = tuple(int(v) for v in np.atleast_1d(z))
        if len(z) != len(self.offset):
            raise PreconditionError("shift dimension does not match")
        return Omega(self.seed, tuple(a + b for a, b in zip(self.offset, z)))


@dataclass(frozen=True)
class RandomCoefficient:
    """Coefficient field of one realisation; picklable for worker pools."""

    kind: str
    law: CoefficientLaw
    seed: int
    offset: tuple[int, ...]
    stream: int
    radius: float = 0.4
    center_law_hi: float = 0.0  # probability that a cell hosts an inclusion

    def cells(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        base = np.floor(x)
        return base.astype(np.int64) + np.asarray(self.offset, dtype=np.int64), x - base

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cell, frac = self.cells(x)
        if self.kind != "poisson_inclusion":
            return self.law.quantile(cell_uniform(self.seed, self.stream, cell))
        n = x.shape[-1]
        hit = np.zeros(x.shape[:-1], dtype=bool)
        r2 = self.radius**2
        for d in np.ndindex(*(3,) * n):
            d = np.asarray(d, dtype=np.int64) - 1
            c = cell + d
            has = cell_uniform(self.seed, _STREAM_CENTER, c) < self.center_law_hi
            pos = np.stack([cell_uniform(self.seed, _STREAM_CENTER + 1 + a, c)
                            for a in range(n)], axis=-1) + d
            hit |= has & (np.sum((frac - pos) ** 2, axis=-1) <= r2)
        return np.where(hit, self.law.values[1], self.law.values[0])


@dataclass(frozen=True)
class StationaryEnsemble:
    """Random densities ``a(omega, x)|xi|`` and ``b(omega, x)|zeta|``.

    Kinds: ``checkerboard`` draws one uniform per unit cell and reads both
    coefficients from it (a composite material per cell); ``iid_cell`` draws
    ``a`` and ``b`` independently; ``poisson_inclusion`` places an inclusion
    ball of ``radius`` in each cell with the probability of the second atom of
    ``law`` (``values[1]`` inside, ``values[0]`` outside), ``b`` iid per cell.
    """

    kind: str
    law: CoefficientLaw
    surface_law: CoefficientLaw
    seed: int
    n: int = 1
    radius: float = 0.4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"ensemble kind must be one of {KINDS}", "kind")
        if self.n not in (1, 2):
            raise ConfigError("ensembles support n in {1, 2}", "n")
        if self.kind == "poisson_inclusion":
            if len(self.law.values) != 2:
                raise ConfigError("poisson_inclusion needs a two-atom law", "law")
            if not 0 < self.radius <= 1:
                raise ConfigError("inclusion radius must lie in (0, 1]", "radius")

    def omega(self, seed: int | None = None) -> Omega:
        return Omega(self.seed if seed is None else int(seed), (0,) * self.n)

    def shift(self, omega: Omega, z) -> Omega:
        return omega.shifted(z)

    def coefficients(self, omega: Omega) -> tuple[RandomCoefficient, RandomCoefficient]:
        sv = _STREAM_VOLUME
        ss = _STREAM_VOLUME if self.kind == "checkerboard" else _STREAM_SURFACE
        vol_kind = self.kind
        p_center = self.law.probs[1] if self.kind == "poisson_inclusion" else 0.0
        a = RandomCoefficient(vol_kind, self.law, omega.seed, omega.offset, sv, self.radius,
                              p_center)
        b = RandomCoefficient("iid_cell", self.surface_law, omega.seed, omega.offset, ss)
        return a, b

    @property
    def volume_constants(self) -> IntegrandConstants:
        lo, hi = self.law.lo, self.law.hi
        if self.kind == "poisson_inclusion":
            lo, hi = min(self.law.values), max(self.law.values)
        return IntegrandConstants(c1=hi, c2=lo, c3=hi)

    @property
    def surface_constants(self) -> IntegrandConstants:
        return IntegrandConstants(c2=self.surface_law.lo, c3=self.surface_law.hi,
                                  sigma2=_SIGMA2_STEP)

    def realize(self, omega: Omega) -> tuple[VolumeIntegrand, SurfaceIntegrand]:
        a, b = self.coefficients(omega)
        dims = (1, self.n)
        f = VolumeIntegrand(ScaledNormVolume(a), self.volume_constants, dims,
                            one_homogeneous=True, name=f"{self.kind}-volume")
        g = SurfaceIntegrand(ScaledNormSurface(b), self.surface_constants, dims,
                             one_homogeneous=True, name=f"{self.kind}-surface")
        return f, g

    def cell_values(self, omega: Omega, cells) -> np.ndarray:
        """Volume coefficient at the centres of the given lattice cells."""
        a, _ = self.coefficients(omega)
        return a(np.asarray(cells, dtype=float) + 0.5)


def make_ensemble(spec: Mapping[str, Any], seed: int) -> StationaryEnsemble:
    """Build from ``{kind, law, surface_law?, n?, radius?}``."""
    spec = dict(spec)
    known = {"kind", "law", "surface_law", "n", "radius"}
    extra = set(spec) - known
    if extra:
        raise ConfigError(f"unknown ensemble keys {sorted(extra)}", "ensemble")
    if "law" not in spec:
        raise ConfigError("ensemble needs a law", "ensemble.law")
    law = CoefficientLaw.parse(spec["law"], "ensemble.law")
    surf = spec.get("surface_law")
    surface_law = CoefficientLaw.parse(surf, "ensemble.surface_law") if surf is not None \
        else CoefficientLaw.constant(1.0)
    return StationaryEnsemble(str(spec.get("kind", "iid_cell")), law, surface_law, int(seed),
                              int(spec.get("n", 1)), float(spec.get("radius", 0.4)))


def shift(ensemble: StationaryEnsemble, omega: Omega, z) -> Omega:
    return ensemble.shift(omega, z)


def sub_seeds(seed: int, count: int) -> list[int]:
    """Deterministic independent child seeds."""
    return [int(np.random.SeedSequence([int(seed) % 2**64, i]).generate_state(1, np.uint64)[0])
            for i in range(count)]


# ---------------------------------------------------------------------------
# subadditive processes


def _dyadic_spacing(multiplier: int, h: float) -> float:
    j = max(0, math.ceil(math.log2(multiplier / h) - 1e-12))
    return 2.0**-j


@dataclass(frozen=True)
class SubadditiveProcess:
    """Set function ``A -> m(datum, M R A) / M^d`` on half-open integer boxes."""

    ensemble: StationaryEnsemble
    kind: str  # volume | surface
    param: np.ndarray  # xi (1 x n) or zeta (1,)
    nu: np.ndarray
    h: float = 0.5
    c: float = 0.5
    quant: Quantization = Quantization()
    solver: str = "auto"
    schedule: Schedule = Schedule()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def rotation(self):
        rot = rotation_matrix(self.nu)
        if not rot.rational:
            raise InvalidDirectionError("processes need a rational direction")
        return rot

    @property
    def multiplier(self) -> int:
        return self.rotation.multiplier

    @property
    def frame(self) -> np.ndarray:
        """The integer matrix ``M R``."""
        return self.rotation.integer_frame()[1]

    @property
    def dim(self) -> int:
        return self.ensemble.n if self.kind == "volume" else self.ensemble.n - 1

    @property
    def frame_spacing(self) -> float:
        return _dyadic_spacing(self.multiplier, self.h)

    def _box(self, lower, upper) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(lower, dtype=np.int64).reshape(-1)
        hi = np.asarray(upper, dtype=np.int64).reshape(-1)
        if lo.size != self.dim or hi.size != self.dim or np.any(hi <= lo):
            raise PreconditionError(f"need a non-empty box in Z^{self.dim}")
        return lo, hi

    def problem(self, omega: Omega, lower=(), upper=()) -> CellProblem:
        lo, hi = self._box(lower, upper)
        n = self.ensemble.n
        frame = self.frame.astype(float)
        f, g = self.ensemble.realize(omega)
        h = self.frame_spacing
        if self.kind == "volume":
            t = frame @ lo.astype(float)
            dom = box_domain(frame, np.zeros(n), (hi - lo).astype(float), h, translation=t)
            return CellProblem("F_G0", f, derivative_at_zero(g), dom, Linear(self.param, t))
        c = self.c
        if abs(c / h - round(c / h)) > 1e-12:
            raise PreconditionError(f"thickness c={c} is not a multiple of the spacing {h}")
        t = frame @ np.append(lo.astype(float), 0.0)
        low = np.append(np.zeros(n - 1), -c)
        up = np.append((hi - lo).astype(float), c)
        dom = box_domain(frame, low, up, h, translation=t)
        return CellProblem("FINF_G", recession(f), g, dom, Step(t, self.param, dom.nu))

    def evaluate(self, omega: Omega, lower=(), upper=()) -> float:
        p = self.problem(omega, lower, upper)
        res = solve(p, self.quant, self.solver, self.schedule)
        return res.value / float(self.multiplier) ** self.dim

    def bound(self, lower=(), upper=()) -> float:
        """Growth bound of the normalised value on the box."""
        lo, hi = self._box(lower, upper)
        vol = float(np.prod(hi - lo))
        if self.kind == "volume":
            k = self.ensemble.volume_constants
            return (k.c3 * float(matrix_norm(self.param[None])[0]) + k.c4) * vol
        k = self.ensemble.surface_constants
        return k.c3 * float(vector_norm(self.param[None])[0]) * vol


def _direction(nu, n) -> np.ndarray:
    return np.eye(n)[-1] if nu is None else np.atleast_1d(np.asarray(nu, dtype=float))


def process_volume(ensemble: StationaryEnsemble, xi, nu=None, **kw) -> SubadditiveProcess:
    xi = np.atleast_2d(np.asarray(xi, dtype=float)).reshape(1, ensemble.n)
    proc = SubadditiveProcess(ensemble, "volume", xi, _direction(nu, ensemble.n), **kw)
    proc.rotation  # validate rationality eagerly
    return proc


def process_surface(ensemble: StationaryEnsemble, zeta, nu=None, **kw) -> SubadditiveProcess:
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    proc = SubadditiveProcess(ensemble, "surface", zeta, _direction(nu, ensemble.n), **kw)
    proc.rotation
    if ensemble.n == 1:
        proc.meta["note"] = ("0-dimensional surface process: evaluate() returns the single "
                             "value on M R [-c, c); the limit comes from the cell formula")
    return proc


# ---------------------------------------------------------------------------
# ergodic estimator


@dataclass
class ErgodicEstimate:
    r: list[int]
    values: np.ndarray  # (len(r), n_omega) normalised values
    seeds: list[int]
    mean: np.ndarray
    std: np.ndarray
    limit: float
    spread: float


def centered_box(r: int, dim: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    lo = -(int(r) // 2)
    return (lo,) * dim, (lo + int(r),) * dim


def _ergodic_task(args):
    proc, seed, r = args
    lo, hi = centered_box(r, proc.dim)
    return proc.evaluate(proc.ensemble.omega(seed), lo, hi) / float(r) ** proc.dim


def ergodic_estimate(process: SubadditiveProcess, r_schedule: Sequence[int] = (16, 32, 64, 128),
                     n_omega: int = 32, seed: int | None = None, workers: int = 1,
                     tail_window: int = 2) -> ErgodicEstimate:
    """Monte Carlo over sub-seeded samples of ``mu(omega, Q_r) / r^d`` along the schedule."""
    if process.dim == 0:
        raise PreconditionError("the process is 0-dimensional; use the cell formula instead")
    rs = [int(r) for r in r_schedule]
    if any(b <= a for a, b in zip(rs, rs[1:])) or rs[0] < 1:
        raise PreconditionError("r_schedule must be increasing positive integers")
    seeds = sub_seeds(process.ensemble.seed if seed is None else seed, n_omega)
    tasks = [(process, s, r) for r in rs for s in seeds]
    vals = np.array(parallel_map(_ergodic_task, tasks, workers)).reshape(len(rs), n_omega)
    mean = vals.mean(axis=1)
    std = vals.std(axis=1, ddof=1) if n_omega > 1 else np.zeros(len(rs))
    ex = extrapolate(list(zip(map(float, rs), mean.tolist())), min(tail_window, len(rs)))
    return ErgodicEstimate(rs, vals, seeds, mean, std, ex.limit, ex.spread)
