"""Cell-valued fields with per-face jump flags, canonical data and energies.

Bulk energy is carried by interior faces: each face owns the two half-cells
adjacent to it (plus the outer half of the first / last cell of a lattice
line) and evaluates ``f`` there at the rank-one proxy ``(delta / h) (x) nu``.
A jump face instead pays ``g(x, delta, nu) * h^(n-1)`` and its half-cells see
a zero gradient.  In 1D this integrates piecewise-linear fields exactly; in 2D
each axis contributes its own directional proxy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .geometry import FaceGeometry, GridDomain
from .integrands import SurfaceIntegrand, VolumeIntegrand, vector_norm


@dataclass(frozen=True, eq=False)
class DiscreteField:
    values: np.ndarray  # (*domain.shape, m)
    jumps: tuple[np.ndarray, ...]  # per axis, interior-face shape
    domain: GridDomain

    def __post_init__(self):
        d = self.domain
        if self.values.shape[:-1] != d.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {d.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if len(self.jumps) != d.n:
            raise ValueError("need one jump array per axis")
        for a, j in enumerate(self.jumps):
            want = tuple(c - 1 if b == a else c for b, c in enumerate(d.shape))
            if j.shape != want or j.dtype != bool:
                raise ValueError(f"jump flags on axis {a} must be boolean of shape {want}")

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def from_values(cls, values, domain: GridDomain, jumps=None) -> "DiscreteField":
        v = np.asarray(values, dtype=float)
        if v.shape == domain.shape:
            v = v[..., None]
        if jumps is None:
            jumps = no_jumps(domain)
        return cls(v, tuple(np.asarray(j, dtype=bool) for j in jumps), domain)

    def differences(self, axis: int) -> np.ndarray:
        return np.diff(self.values, axis=axis)

    def with_values(self, values) -> "DiscreteField":
        return DiscreteField.from_values(values, self.domain, self.jumps)

    def with_jumps(self, jumps) -> "DiscreteField":
        return DiscreteField(self.values, tuple(np.asarray(j, dtype=bool) for j in jumps),
                             self.domain)

    def shifted(self, c) -> "DiscreteField":
        return DiscreteField(self.values + np.asarray(c, dtype=float), self.jumps, self.domain)

    def write_csv(self, out: TextIO):
        """Flat dump: cell index, value components, jump flag of each ``+axis`` face."""
        n, m = self.domain.n, self.m
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"i{a}" for a in range(n)] + [f"value{c}" for c in range(m)]
                   + [f"jump{a}" for a in range(n)])
        padded = []
        for a, j in enumerate(self.jumps):
            pad = [(0, 0)] * n
            pad[a] = (0, 1)
            padded.append(np.pad(j, pad))
        for idx in np.ndindex(*self.domain.shape):
            w.writerow([*idx, *(repr(float(v)) for v in self.values[idx]),
                        *(int(p[idx]) for p in padded)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def no_jumps(domain: GridDomain) -> tuple[np.ndarray, ...]:
    return tuple(
        np.zeros(tuple(c - 1 if b == a else c for b, c in enumerate(domain.shape)), dtype=bool)
        for a in range(domain.n)
    )


# ---------------------------------------------------------------------------
# canonical data


def linear_field(xi, domain: GridDomain, origin=None) -> DiscreteField:
    """``values = xi . (center - origin)`` on every cell, no jumps."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != domain.n:
        raise ValueError(f"xi must be m x {domain.n}")
    x = domain.cell_centers if origin is None else domain.cell_centers - origin
    vals = np.einsum("mn,...n->...m", xi, x)
    return DiscreteField(vals, no_jumps(domain), domain)


def step_side(domain: GridDomain, x0, nu) -> np.ndarray:
    """Cells whose center lies on the closed positive side of the plane."""
    x0 = np.asarray(x0, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return (domain.cell_centers - x0) @ nu >= 0


def step_field(x0, zeta, nu, domain: GridDomain) -> DiscreteField:
    """``zeta`` on the positive side of the plane through ``x0`` normal to ``nu``."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    side = step_side(domain, x0, nu)
    vals = np.where(side[..., None], zeta, 0.0)
    if not np.any(zeta):
        return DiscreteField(vals, no_jumps(domain), domain)
    jumps = tuple(np.diff(side.astype(np.int8), axis=a) != 0 for a in range(domain.n))
    return DiscreteField(vals, jumps, domain)


# ---------------------------------------------------------------------------
# energies


def _proxy(delta: np.ndarray, geom: FaceGeometry, h_phys: float) -> np.ndarray:
    return (delta / h_phys)[..., :, None] * geom.normal


def face_cost_tables(f: VolumeIntegrand, g: SurfaceIntegrand, domain: GridDomain, axis: int,
                     delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bulk and jump cost of every face on ``axis`` for candidate differences.

    ``delta`` has shape ``(*face_shape, *extra, m)``; both outputs have shape
    ``(*face_shape, *extra)``.
    """
    geom = domain.face_geometry(axis)
    fs = geom.shape
    extra = delta.shape[len(fs):-1]
    ones = (1,) * len(extra)
    n = domain.n
    xq = geom.xq.reshape(fs + ones + (4, n))
    wq = geom.wq.reshape(fs + ones + (4,))
    fq = f(xq, _proxy(delta, geom, domain.h_phys)[..., None, :, :])
    bulk = np.sum(fq * wq, axis=-1)
    m = delta.shape[-1]
    rest = np.sum(f(geom.xq, np.zeros((m, n))) * geom.wq, axis=-1).reshape(fs + ones)
    jump = g(geom.x.reshape(fs + ones + (n,)), delta, geom.normal) * geom.area + rest
    return bulk, jump


def _face_parts(f, g, u: DiscreteField, axis: int, region):
    d = u.domain
    geom = d.face_geometry(axis)
    delta = u.differences(axis)
    jump = u.jumps[axis]
    eff = np.where(jump[..., None], 0.0, delta)
    fq = f(geom.xq, _proxy(eff, geom, d.h_phys)[..., None, :, :])
    w = geom.wq
    active = jump
    if region is not None:
        lo = region[geom.minus_index]
        hi = region[geom.plus_index]
        w = w * np.stack([lo, hi, lo, hi], axis=-1)
        active = jump & lo & hi
    bulk = np.sum(fq * w, axis=-1)
    surf = np.zeros_like(bulk)
    if active.any():
        surf[active] = g(geom.x[active], delta[active], geom.normal) * geom.area
    return bulk, surf


def energy(f: VolumeIntegrand, g: SurfaceIntegrand, u: DiscreteField, region=None) -> float:
    """Discrete energy of ``u`` restricted to the cells in ``region`` (default all).

    A face with only one adjacent cell in the region contributes the bulk of
    that half only.
    """
    return float(sum(np.sum(b) + np.sum(s) for b, s in
                     (_face_parts(f, g, u, a, region) for a in range(u.domain.n))))


def energy_parts(f, g, u: DiscreteField, region=None) -> dict[str, float]:
    bulk = surf = 0.0
    for a in range(u.domain.n):
        b, s = _face_parts(f, g, u, a, region)
        bulk += float(np.sum(b))
        surf += float(np.sum(s))
    return {"bulk": bulk, "surface": surf, "total": bulk + surf}


def total_variation(u: DiscreteField) -> float:
    """Discrete ``|Du|`` consistent with the energy's face quadrature."""
    d = u.domain
    tv = 0.0
    for a in range(d.n):
        geom = d.face_geometry(a)
        size = vector_norm(u.differences(a))
        bulk_weight = np.sum(geom.wq, axis=-1) / d.h_phys
        tv += float(np.sum(np.where(u.jumps[a], geom.area, bulk_weight) * size))
    return tv


# ---------------------------------------------------------------------------
# one-dimensional BV test functions


def cantor_staircase(x, level: int) -> np.ndarray:
    """Level-``level`` piecewise-linear approximation of the Cantor function on [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = np.zeros_like(x)
    done = np.zeros(x.shape, dtype=bool)
    scale = 1.0
    y = x.copy()
    for _ in range(level):
        scale *= 0.5
        t = 3.0 * y
        digit = np.minimum(np.floor(t), 2.0)
        mid = (digit == 1) & ~done
        out = np.where(mid, out + scale, out)
        done |= mid
        right = (digit == 2) & ~done
        out = np.where(right, out + scale, out)
        y = np.where(right, t - 2.0, t)
    return np.where(done, out, out + scale * np.clip(y, 0.0, 1.0))


@dataclass(frozen=True)
class BVTestFunction1D:
    """Piecewise-linear part + jumps + a weighted Cantor staircase on (0, 1)."""

    breakpoints: tuple[float, ...] = (0.0, 1.0)
    slopes: tuple[float, ...] = (0.0,)
    jumps: tuple[tuple[float, float], ...] = ()
    cantor_weight: float = 0.0
    cantor_level: int = 8
    offset: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.slopes) != len(self.breakpoints) - 1:
            raise ValueError("need one slope per piece")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must increase")
        if not 1 <= self.cantor_level <= 12:
            raise ValueError("cantor level must be in 1..12")

    @property
    def interval(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    @property
    def polar(self) -> float:
        return float(np.sign(self.cantor_weight))

    def pieces(self) -> list[tuple[float, float]]:
        """(length, slope) of each affine piece."""
        b = self.breakpoints
        return [(b[i + 1] - b[i], s) for i, s in enumerate(self.slopes)]

    def variation_parts(self) -> dict[str, float]:
        ac = sum(abs(s) * ln for ln, s in self.pieces())
        jp = sum(abs(a) for _, a in self.jumps)
        cantor = abs(self.cantor_weight)
        return {"absolutely_continuous": ac, "jump": jp, "cantor": cantor,
                "total": ac + jp + cantor}

    def total_variation(self) -> float:
        return self.variation_parts()["total"]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b = np.asarray(self.breakpoints)
        out = np.full(x.shape, self.offset)
        for i, s in enumerate(self.slopes):
            out += s * (np.clip(x, b[i], b[i + 1]) - b[i])
        for loc, amp in self.jumps:
            out += np.where(x >= loc, amp, 0.0)
        if self.cantor_weight:
            a0, a1 = self.interval
            out += self.cantor_weight * cantor_staircase((x - a0) / (a1 - a0), self.cantor_level)
        return out


def cantor_test_function(weight: float, level: int = 8) -> BVTestFunction1D:
    if not 3 <= level <= 12:
        raise ValueError("cantor level must lie in 3..12")
    return BVTestFunction1D(cantor_weight=float(weight), cantor_level=int(level))

