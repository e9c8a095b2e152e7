"""Volume and surface energy densities with growth constants.

A volume density ``f(x, xi)`` is evaluated on arrays shaped ``x[..., n]`` and
``xi[..., m, n]``; a surface density ``g(x, zeta, nu)`` on ``x[..., n]``,
``zeta[..., m]`` and ``nu[..., n]``.  Leading axes broadcast.  Every
evaluation is screened: a non-finite or negative value raises
:class:`IntegrandEvaluationError` naming the offending sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    IntegrandEvaluationError,
    NonConvergenceError,
    PreconditionError,
)

# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class Modulus:
    """Nondecreasing piecewise-linear function on [0, inf), flat past the last knot."""

    knots: tuple[float, ...] = (0.0, 1.0)
    values: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise ValueError("modulus needs matching knot/value tables of length >= 2")
        if k[0] != 0.0 or v[0] != 0.0:
            raise ValueError("modulus must vanish at 0")
        if np.any(np.diff(k) <= 0):
            raise ValueError("modulus knots must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise ValueError("modulus values must be nondecreasing")

    def __call__(self, s):
        return np.interp(np.asarray(s, dtype=float), self.knots, self.values)

    @classmethod
    def zero(cls) -> "Modulus":
        return cls((0.0, 1.0), (0.0, 0.0))

    @classmethod
    def ramp(cls, width: float, top: float = 1.0) -> "Modulus":
        """Linear rise from 0 to ``top`` over ``[0, width]``."""
        return cls((0.0, float(width)), (0.0, float(top)))


@dataclass(frozen=True)
class IntegrandConstants:
    c1: float = 0.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 0.0
    c5: float = 0.0
    alpha: float = 0.5
    sigma1: Modulus = field(default_factory=Modulus.zero)
    sigma2: Modulus = field(default_factory=Modulus.zero)

    def __post_init__(self):
        if not (self.c2 > 0 and self.c3 >= self.c2):
            raise ValueError(f"need 0 < c2 <= c3, got c2={self.c2}, c3={self.c3}")
        if min(self.c1, self.c4, self.c5) < 0:
            raise ValueError("c1, c4, c5 must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def with_updates(self, **kw) -> "IntegrandConstants":
        for key in ("sigma1", "sigma2"):
            if key in kw and not isinstance(kw[key], Modulus):
                knots, values = zip(*kw[key])
                kw[key] = Modulus(tuple(map(float, knots)), tuple(map(float, values)))
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# norms and screening


def matrix_norm(xi: np.ndarray) -> np.ndarray:
    """Euclidean (Frobenius) norm over the trailing ``(m, n)`` axes."""
    if xi.shape[-1] == 1 and xi.shape[-2] == 1:
        return np.abs(xi[..., 0, 0])
    return np.sqrt(np.sum(xi * xi, axis=(-2, -1)))


def vector_norm(zeta: np.ndarray) -> np.ndarray:
    if zeta.shape[-1] == 1:
        return np.abs(zeta[..., 0])
    return np.sqrt(np.sum(zeta * zeta, axis=-1))


def _screen(out: np.ndarray, name: str, arrays: Mapping[str, tuple[np.ndarray, int]]):
    bad = ~np.isfinite(out) | (out < 0)
    if not bad.any():
        return
    idx = np.unravel_index(int(np.flatnonzero(bad)[0]), out.shape)
    sample = {"value": float(out[idx])}
    for key, (arr, core) in arrays.items():
        full = np.broadcast_to(arr, out.shape + arr.shape[arr.ndim - core:])
        sample[key] = full[idx].tolist()
    raise IntegrandEvaluationError(
        f"integrand {name!r} returned {sample['value']!r} at {sample}", sample
    )


@dataclass(frozen=True, eq=False)
class VolumeIntegrand:
    """Bulk density ``f(x, xi)`` with declared constants and flags."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constants: IntegrandConstants
    dims: tuple[int, int] = (1, 1)
    one_homogeneous: bool = False
    x_independent: bool = False
    name: str = "custom"
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __call__(self, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        out = np.asarray(self.func(x, xi), dtype=float)
        out = np.broadcast_to(out, np.broadcast_shapes(x.shape[:-1], xi.shape[:-2]))
        _screen(out, self.name, {"x": (x, 1), "xi": (xi, 2)})
        return out


@dataclass(frozen=True, eq=False)
class SurfaceIntegrand:
    """Interface density ``g(x, zeta, nu)`` with declared constants and flags."""

    func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    constants: IntegrandConstants
    dims: tuple[int, int] = (1, 1)
    one_homogeneous: bool = False
    x_independent: bool = False
    name: str = "custom"
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __call__(self, x, zeta, nu) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        nu = np.asarray(nu, dtype=float)
        out = np.asarray(self.func(x, zeta, nu), dtype=float)
        out = np.broadcast_to(
            out, np.broadcast_shapes(x.shape[:-1], zeta.shape[:-1], nu.shape[:-1])
        )
        _screen(out, self.name, {"x": (x, 1), "zeta": (zeta, 1), "nu": (nu, 1)})
        return out


# ---------------------------------------------------------------------------
# coefficient fields and density kernels (module-level so they pickle)


@dataclass(frozen=True)
class ConstantCoefficient:
    value: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[:-1], self.value)


@dataclass(frozen=True)
class LaminateCoefficient:
    """``values[floor((x[axis] - offset) / cell) mod len(values)]``."""

    values: tuple[float, ...]
    cell: float = 1.0
    axis: int = 0
    offset: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor((x[..., self.axis] - self.offset) / self.cell).astype(np.int64)
        return np.asarray(self.values, dtype=float)[idx % len(self.values)]


@dataclass(frozen=True)
class CheckerboardCoefficient:
    """``values[(sum_i floor(x_i / cell)) mod len(values)]``."""

    values: tuple[float, ...]
    cell: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor(x / self.cell).astype(np.int64).sum(axis=-1)
        return np.asarray(self.values, dtype=float)[idx % len(self.values)]


@dataclass(frozen=True)
class ScaledNormVolume:
    coef: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, xi):
        return self.coef(x) * matrix_norm(xi)


@dataclass(frozen=True)
class ScaledNormSurface:
    coef: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, zeta, nu):
        return self.coef(x) * vector_norm(zeta)


@dataclass(frozen=True)
class SmoothedNormVolume:
    scale: float = 1.0
    slope: float = 0.0

    def __call__(self, x, xi):
        t = matrix_norm(xi)
        # sqrt(1 + t^2) - 1 written without cancellation
        smooth = t * t / (np.sqrt(1.0 + t * t) + 1.0)
        return self.scale * smooth + self.slope * t


@dataclass(frozen=True)
class NormPlusRootVolume:
    coef: float = 1.0

    def __call__(self, x, xi):
        t = matrix_norm(xi)
        return t + self.coef * np.sqrt(t)


@dataclass(frozen=True)
class QuadraticVolume:
    coef: float = 1.0

    def __call__(self, x, xi):
        t = matrix_norm(xi)
        return self.coef * t * t


@dataclass(frozen=True)
class ExpNormSurface:
    """``|zeta| (2 - exp(-|zeta|))``."""

    def __call__(self, x, zeta, nu):
        s = vector_norm(zeta)
        return s * (2.0 - np.exp(-s))


@dataclass(frozen=True)
class SaturatingSurface:
    cap: float = 1.0

    def __call__(self, x, zeta, nu):
        return np.minimum(vector_norm(zeta), self.cap)


@dataclass(frozen=True)
class NormPlusSquareSurface:
    """``|zeta| + min(|zeta|^2, |zeta|)``."""

    def __call__(self, x, zeta, nu):
        s = vector_norm(zeta)
        return s + np.minimum(s * s, s)


@dataclass(frozen=True)
class RecessionKernel:
    base: Callable
    t_max: float

    def __call__(self, x, xi):
        return self.base(x, self.t_max * xi) / self.t_max


@dataclass(frozen=True)
class DerivativeAtZeroKernel:
    base: Callable
    t_min: float

    def __call__(self, x, zeta, nu):
        s = vector_norm(zeta)
        safe = np.where(s > 0, s, 1.0)[..., None]
        unit = zeta / safe
        return s * self.base(x, self.t_min * unit, nu) / self.t_min


# ---------------------------------------------------------------------------
# builtin families

# Interface densities vanish at zeta = 0, so any continuity modulus sigma2 must
# reach 1 immediately; a steep ramp is the tightest monotone choice.
_SIGMA2_STEP = Modulus.ramp(1e-9, 1.0)


def _coefficient(family: str, params: dict) -> tuple[Callable, float, float, bool]:
    if family == "iso_norm":
        c = float(params.pop("c", 1.0))
        if c <= 0:
            raise ConfigError("iso_norm needs c > 0", "params.c")
        return ConstantCoefficient(c), c, c, True
    values = tuple(float(v) for v in params.pop("values", (1.0, 3.0)))
    if not values or min(values) <= 0:
        raise ConfigError("coefficients must be positive", "params.values")
    cell = float(params.pop("cell", 1.0))
    if family == "laminate":
        coef = LaminateCoefficient(
            values, cell, int(params.pop("axis", 0)), float(params.pop("offset", 0.0))
        )
    elif family == "checkerboard_cellwise":
        coef = CheckerboardCoefficient(values, cell)
    else:
        raise ConfigError(f"unknown family {family!r}", "family")
    return coef, min(values), max(values), len(set(values)) == 1


def _finish(params: dict, overrides: Mapping | None, base: IntegrandConstants):
    if params:
        raise ConfigError(f"unknown parameters {sorted(params)}", "params")
    return base.with_updates(**dict(overrides)) if overrides else base


VOLUME_FAMILIES = (
    "iso_norm",
    "laminate",
    "checkerboard_cellwise",
    "smoothed_norm",
    "norm_plus_root",
    "quadratic",
)
SURFACE_FAMILIES = (
    "iso_norm",
    "laminate",
    "checkerboard_cellwise",
    "exp_norm",
    "saturating",
    "norm_plus_square",
)


def make_volume(
    family: str,
    params: Mapping | None = None,
    *,
    dims: tuple[int, int] = (1, 1),
    constants: Mapping | None = None,
) -> VolumeIntegrand:
    """Build a builtin volume density by family name."""
    p = dict(params or {})
    if family in ("iso_norm", "laminate", "checkerboard_cellwise"):
        coef, lo, hi, flat = _coefficient(family, p)
        k = _finish(p, constants, IntegrandConstants(c1=hi, c2=lo, c3=hi))
        return VolumeIntegrand(
            ScaledNormVolume(coef), k, dims, one_homogeneous=True,
            x_independent=flat, name=family,
        )
    if family == "smoothed_norm":
        scale = float(p.pop("scale", 1.0))
        slope = float(p.pop("slope", 0.0))
        c2 = float(p.pop("c2", slope if slope > 0 else 0.5 * scale))
        k = _finish(
            p, constants,
            IntegrandConstants(c1=scale + slope, c2=c2, c3=scale + slope, c5=scale),
        )
        return VolumeIntegrand(
            SmoothedNormVolume(scale, slope), k, dims, x_independent=True, name=family
        )
    if family == "norm_plus_root":
        coef = float(p.pop("coef", 1.0))
        k = _finish(
            p, constants,
            IntegrandConstants(
                c1=1.0 + coef, c2=1.0, c3=1.0 + coef, c4=coef / 4.0, c5=coef,
                sigma1=Modulus.ramp(1e-9, max(1.0, 1.0 / max(coef, 1e-12))),
            ),
        )
        return VolumeIntegrand(
            NormPlusRootVolume(coef), k, dims, x_independent=True, name=family
        )
    if family == "quadratic":
        coef = float(p.pop("coef", 1.0))
        k = _finish(p, constants, IntegrandConstants(c2=coef, c3=max(coef, 10.0)))
        return VolumeIntegrand(QuadraticVolume(coef), k, dims, x_independent=True, name=family)
    raise ConfigError(f"unknown volume family {family!r}", "family")


def make_surface(
    family: str,
    params: Mapping | None = None,
    *,
    dims: tuple[int, int] = (1, 1),
    constants: Mapping | None = None,
) -> SurfaceIntegrand:
    """Build a builtin surface density by family name."""
    p = dict(params or {})
    if family in ("iso_norm", "laminate", "checkerboard_cellwise"):
        coef, lo, hi, flat = _coefficient(family, p)
        k = _finish(p, constants, IntegrandConstants(c2=lo, c3=hi, sigma2=_SIGMA2_STEP))
        return SurfaceIntegrand(
            ScaledNormSurface(coef), k, dims, one_homogeneous=True,
            x_independent=flat, name=family,
        )
    if family == "exp_norm":
        k = _finish(p, constants, IntegrandConstants(c2=1.0, c3=2.0, sigma2=_SIGMA2_STEP))
        return SurfaceIntegrand(ExpNormSurface(), k, dims, x_independent=True, name=family)
    if family == "saturating":
        cap = float(p.pop("cap", 1.0))
        c2 = float(p.pop("c2", 0.5))
        k = _finish(p, constants, IntegrandConstants(c2=c2, c3=1.0, sigma2=_SIGMA2_STEP))
        return SurfaceIntegrand(SaturatingSurface(cap), k, dims, x_independent=True, name=family)
    if family == "norm_plus_square":
        k = _finish(p, constants, IntegrandConstants(c2=1.0, c3=2.0, sigma2=_SIGMA2_STEP))
        return SurfaceIntegrand(NormPlusSquareSurface(), k, dims, x_independent=True, name=family)
    raise ConfigError(f"unknown surface family {family!r}", "family")


# ---------------------------------------------------------------------------
# sampling and admissibility reports


def _unit_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    axes = np.eye(dim)
    rand = rng.normal(size=(count, dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.concatenate([axes, -axes, rand])


@dataclass(frozen=True, eq=False)
class SampleSpec:
    """Sampling grid for admissibility checks.

    ``xi`` holds matrices ``(K, m, n)``, ``zeta`` vectors ``(K, m)``; ``t`` is
    the increasing schedule used for the recession / small-jump checks and
    ``nu`` the unit normals ``(V, n)``.
    """

    x: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    nu: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if min(len(self.x), len(self.xi), len(self.zeta), len(self.nu), len(self.t)) == 0:
            raise PreconditionError("sample spec must be nonempty on every axis")
        if np.any(np.diff(self.t) <= 0) or self.t[0] <= 0:
            raise PreconditionError("t samples must be positive and increasing")

    @classmethod
    def grid(
        cls,
        n: int = 1,
        m: int = 1,
        *,
        norms: Sequence[float] = (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0),
        x_points: Sequence[Sequence[float]] | None = None,
        t: Sequence[float] = tuple(10.0 ** np.arange(-3, 3.5, 0.5)),
        seed: int = 0,
    ) -> "SampleSpec":
        rng = np.random.default_rng(seed)
        if x_points is None:
            if n == 1:
                x = np.linspace(-2.3, 2.7, 11)[:, None]
            else:
                x = rng.uniform(-2.5, 2.5, size=(11, n))
                x[0] = 0.0
        else:
            x = np.asarray(x_points, dtype=float).reshape(-1, n)
        dirs_mn = _unit_directions(m * n, 6, rng).reshape(-1, m, n)
        dirs_m = _unit_directions(m, 6, rng)
        norms = np.asarray(norms, dtype=float)
        xi = (norms[:, None, None, None] * dirs_mn[None]).reshape(-1, m, n)
        zeta = (norms[:, None, None] * dirs_m[None]).reshape(-1, m)
        nu = _unit_directions(n, 4, rng)
        return cls(x, _unique_rows(xi), _unique_rows(zeta), nu, np.asarray(t, dtype=float))


def _unique_rows(a: np.ndarray) -> np.ndarray:
    flat = a.reshape(len(a), -1)
    _, idx = np.unique(flat, axis=0, return_index=True)
    return a[np.sort(idx)]


@dataclass
class PropertyVerdict:
    name: str
    passed: bool
    worst_violation: float
    witness: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        text = f"{self.name:<4} {tag}  worst violation {self.worst_violation:.3e}"
        if not self.passed:
            text += f"  at {self.witness}"
        return text


@dataclass
class AdmissibilityReport:
    kind: str
    name: str
    verdicts: dict[str, PropertyVerdict] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def add(self, verdict: PropertyVerdict):
        if verdict.name in self.verdicts:
            raise ValueError(f"property {verdict.name} reported twice")
        self.verdicts[verdict.name] = verdict

    def summary(self) -> str:
        head = f"{self.kind} integrand {self.name!r}: {'PASS' if self.passed else 'FAIL'}"
        body = [v.line() for v in self.verdicts.values()]
        return "\n".join([head, *("  " + b for b in body), *("  note: " + n for n in self.notes)])


def _verdict(name: str, violation: np.ndarray, scale: np.ndarray, witness_of) -> PropertyVerdict:
    """Worst ``violation`` against a relative rounding allowance."""
    tol = 1e-10 * (1.0 + np.abs(scale))
    excess = violation - tol
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(max(violation[i], 0.0))
    ok = bool(excess[i] <= 0)
    return PropertyVerdict(name, ok, worst if not ok else float(max(violation.max(), 0.0)),
                           {} if ok else witness_of(i))


def check_volume_admissibility(f: VolumeIntegrand, spec: SampleSpec) -> AdmissibilityReport:
    """Sampled verdicts for continuity, lower/upper bounds and recession decay."""
    k = f.constants
    rep = AdmissibilityReport("volume", f.name)
    x = spec.x[:, None, :]
    xi = spec.xi[None]
    vals = f(x, xi)  # (S, K)
    norm = matrix_norm(spec.xi)[None]

    # (f2) continuity over all sampled pairs at each x
    d = matrix_norm(spec.xi[:, None] - spec.xi[None, :])[None]
    lhs = np.abs(vals[:, :, None] - vals[:, None, :])
    rhs = k.sigma1(d) * (vals[:, :, None] + vals[:, None, :]) + k.c1 * d
    rep.add(_verdict("f2", lhs - rhs, rhs, lambda i: {
        "x": spec.x[i[0]].tolist(), "xi1": spec.xi[i[1]].tolist(), "xi2": spec.xi[i[2]].tolist()}))

    wit = lambda i: {"x": spec.x[i[0]].tolist(), "xi": spec.xi[i[1]].tolist(),  # noqa: E731
                     "|xi|": float(matrix_norm(spec.xi[i[1]]))}
    rep.add(_verdict("f3", k.c2 * norm - vals, vals, wit))
    rep.add(_verdict("f4", vals - (k.c3 * norm + k.c4), vals, wit))

    # (f5) through the Cauchy form on directions of unit norm
    unit = spec.xi[norm[0] > 0] / matrix_norm(spec.xi[norm[0] > 0])[:, None, None]
    unit = _unique_rows(np.round(unit, 12))
    t = spec.t
    raw = f(x[:, None, :, :], t[None, :, None, None, None] * unit[None, None])
    ft = raw / t[None, :, None]
    bound = k.c5 / t[None, :, None] * (1.0 + raw ** (1.0 - k.alpha))  # per-t half
    lhs = np.abs(ft[:, :, None] - ft[:, None, :])
    rhs = bound[:, :, None] + bound[:, None, :]
    rep.add(_verdict("f5", lhs - rhs, rhs, lambda i: {
        "x": spec.x[i[0]].tolist(), "s": float(t[i[1]]), "t": float(t[i[2]]),
        "xi": unit[i[3]].tolist()}))
    return rep


def check_surface_admissibility(
    g: SurfaceIntegrand,
    spec: SampleSpec,
    *,
    uniformity_tol: float = 1e-2,
) -> AdmissibilityReport:
    """Sampled verdicts for continuity, bounds, small-jump limit and symmetry."""
    k = g.constants
    rep = AdmissibilityReport("surface", g.name)
    x = spec.x[:, None, None, :]
    zeta = spec.zeta[None, :, None, :]
    nu = spec.nu[None, None, :, :]
    vals = g(x, zeta, nu)  # (S, K, V)
    norm = vector_norm(spec.zeta)[None, :, None]

    d = vector_norm(spec.zeta[:, None] - spec.zeta[None, :])[None, :, :, None]
    lhs = np.abs(vals[:, :, None, :] - vals[:, None, :, :])
    rhs = k.sigma2(d) * (vals[:, :, None, :] + vals[:, None, :, :])
    rep.add(_verdict("g2", lhs - rhs, rhs, lambda i: {
        "x": spec.x[i[0]].tolist(), "zeta1": spec.zeta[i[1]].tolist(),
        "zeta2": spec.zeta[i[2]].tolist(), "nu": spec.nu[i[3]].tolist()}))

    wit = lambda i: {"x": spec.x[i[0]].tolist(), "zeta": spec.zeta[i[1]].tolist(),  # noqa: E731
                     "|zeta|": float(vector_norm(spec.zeta[i[1]])), "nu": spec.nu[i[2]].tolist()}
    rep.add(_verdict("g3", k.c2 * norm - vals, vals, wit))
    rep.add(_verdict("g4", vals - k.c3 * norm, vals, wit))

    # (g5) through the Cauchy form with the sampled modulus, plus uniformity
    nz = vector_norm(spec.zeta) > 0
    unit = _unique_rows(np.round(spec.zeta[nz] / vector_norm(spec.zeta[nz])[:, None], 12))
    t = spec.t
    gt = g(x[:, None], t[None, :, None, None, None] * unit[None, None, :, None, :],
           nu[:, None]) / t[None, :, None, None]  # (S, T, U, V)
    lam = modulus_lambda(g, t, spec)
    half = lam[None, :, None, None] * gt / k.c2
    lhs = np.abs(gt[:, :, None] - gt[:, None, :])
    rhs = half[:, :, None] + half[:, None, :]
    cauchy = _verdict("g5", lhs - rhs, rhs, lambda i: {
        "x": spec.x[i[0]].tolist(), "s": float(t[i[1]]), "t": float(t[i[2]]),
        "zeta": unit[i[3]].tolist(), "nu": spec.nu[i[4]].tolist()})
    lam0 = float(lam[0])
    if lam0 > uniformity_tol and cauchy.passed:
        cauchy = PropertyVerdict("g5", False, lam0, {"t": float(t[0]), "lambda": lam0})
    rep.add(cauchy)
    rep.notes.append(
        f"small-jump limit uniformity certified on the sample set only "
        f"(lambda({t[0]:.1e}) = {lam0:.3e})"
    )

    flip = g(x, -zeta, -nu)
    rep.add(_verdict("g6", np.abs(vals - flip), vals, wit))
    return rep


# ---------------------------------------------------------------------------
# recession, derivative at zero, modulus


def _unit_probe(dims: tuple[int, int], seed: int = 0) -> np.ndarray:
    m, n = dims
    rng = np.random.default_rng(seed)
    return _unit_directions(m * n, 4, rng).reshape(-1, m, n)


def _probe_points(n: int) -> np.ndarray:
    base = np.array([0.0, 0.25, 0.75, 1.5, -0.6])
    return np.stack([np.roll(base, i) for i in range(n)], axis=1)


def recession(
    f: VolumeIntegrand,
    t_schedule: Sequence[float] = (1e2, 1e3, 1e4),
    *,
    tol: float | None = None,
    x_points: np.ndarray | None = None,
) -> VolumeIntegrand:
    """Materialise ``f_inf(x, xi) = f(x, t_max xi) / t_max``."""
    t = np.asarray(t_schedule, dtype=float)
    if t.size < 3 or np.any(np.diff(t) <= 0):
        raise PreconditionError("t_schedule needs >= 3 increasing entries")
    if t[-1] < 1e3:
        raise PreconditionError("t_schedule must reach at least 1e3")
    x = _probe_points(f.dims[1]) if x_points is None else np.asarray(x_points, dtype=float)
    unit = _unit_probe(f.dims)
    vals = f(x[:, None, None], t[None, :, None, None, None] * unit[None, None])  # (X, T, U)
    k = f.constants
    if np.any(vals > (k.c3 * t[None, :, None] + k.c4) * (1 + 1e-12)):
        raise PreconditionError(f"integrand {f.name!r} exceeds its linear growth bound")
    ratios = vals[:, -3:] / t[-3:][None, :, None]
    spread = float(np.max(ratios.max(axis=1) - ratios.min(axis=1)))
    if f.one_homogeneous:
        spread = 0.0
    if tol is not None and spread > tol:
        raise NonConvergenceError(f"recession spread {spread:.3e} exceeds {tol:.3e}", spread)
    diag = {"spread": spread, "t_schedule": t.tolist()}
    kinf = replace(k, c4=0.0, c5=0.0)
    func = f.func if f.one_homogeneous else RecessionKernel(f.func, float(t[-1]))
    return VolumeIntegrand(func, kinf, f.dims, one_homogeneous=True,
                           x_independent=f.x_independent, name=f"{f.name}^inf", diagnostics=diag)


def derivative_at_zero(
    g: SurfaceIntegrand,
    t_schedule: Sequence[float] = (1e-4, 1e-6, 1e-8),
    *,
    tol: float | None = None,
    x_points: np.ndarray | None = None,
) -> SurfaceIntegrand:
    """Materialise ``g0(x, zeta, nu) = |zeta| g(x, t_min zeta/|zeta|, nu) / t_min``."""
    t = np.asarray(t_schedule, dtype=float)
    if t.size < 3 or np.any(np.diff(t) >= 0):
        raise PreconditionError("t_schedule needs >= 3 decreasing entries")
    if t[-1] > 1e-3:
        raise PreconditionError("t_schedule must reach at most 1e-3")
    m, n = g.dims
    x = _probe_points(n) if x_points is None else np.asarray(x_points, dtype=float)
    rng = np.random.default_rng(0)
    unit = _unit_directions(m, 4, rng)
    nus = _unit_directions(n, 4, rng)
    vals = g(x[:, None, None, None], t[None, :, None, None, None] * unit[None, None, :, None],
             nus[None, None, None])  # (X, T, U, V)
    k = g.constants
    if np.any(vals > k.c3 * t[None, :, None, None] * (1 + 1e-12)):
        raise PreconditionError(f"integrand {g.name!r} exceeds its upper bound")
    ratios = vals[:, -3:] / t[-3:][None, :, None, None]
    spread = 0.0 if g.one_homogeneous else float(np.max(ratios.max(axis=1) - ratios.min(axis=1)))
    if tol is not None and spread > tol:
        raise NonConvergenceError(f"small-jump spread {spread:.3e} exceeds {tol:.3e}", spread)
    diag = {"spread": spread, "t_schedule": t.tolist()}
    if g.one_homogeneous:
        return replace(g, diagnostics=diag)
    return SurfaceIntegrand(DerivativeAtZeroKernel(g.func, float(t[-1])), g.constants, g.dims,
                            one_homogeneous=True, x_independent=g.x_independent,
                            name=f"{g.name}_0", diagnostics=diag)


def modulus_lambda(
    g: SurfaceIntegrand,
    t,
    spec: SampleSpec,
    *,
    g0: SurfaceIntegrand | None = None,
    points_per_decade: int = 40,
):
    """Sampled ``sup |g0 - g(tau zeta)/tau|`` over ``tau <= t``; nondecreasing in ``t``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr <= 0):
        raise PreconditionError("t must be positive")
    if g0 is None:
        g0 = derivative_at_zero(g)
    if g.one_homogeneous:
        out = np.zeros_like(t_arr)
        return out if np.ndim(t) else float(out[0])
    m = g.dims[0]
    nz = vector_norm(spec.zeta) > 0
    unit = spec.zeta[nz] / vector_norm(spec.zeta[nz])[:, None] if nz.any() else np.eye(m)
    lo = min(1e-6, float(t_arr.min()) * 1e-2)
    decades = max(np.log10(t_arr.max() / lo), 1.0)
    taus = np.unique(np.concatenate([np.geomspace(lo, t_arr.max(), int(decades * points_per_decade) + 1),
                                     t_arr]))
    x = spec.x[:, None, None, :]
    u = unit[None, :, None, :]
    nu = spec.nu[None, None, :, :]
    ref = g0(x, u, nu)
    dev = np.empty(taus.size)
    for j, tau in enumerate(taus):
        dev[j] = np.max(np.abs(ref - g(x, tau * u, nu) / tau))
    lam = np.maximum.accumulate(dev)
    out = lam[np.searchsorted(taus, t_arr)]
    return out if np.ndim(t) else float(out[0])


def pair_constants(f: VolumeIntegrand, g: SurfaceIntegrand) -> IntegrandConstants:
    """Constants valid for the pair: shared coercivity and growth bounds."""
    kf, kg = f.constants, g.constants
    return replace(kf, c2=min(kf.c2, kg.c2), c3=max(kf.c3, kg.c3), sigma2=kg.sigma2)

