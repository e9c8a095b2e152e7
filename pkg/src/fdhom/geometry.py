"""Rotated rectangles on a lattice aligned with the rotation frame.

A domain is a box ``[lower, upper)`` in frame coordinates ``q``; the physical
point is ``translation + frame @ q``.  The last frame axis is the orientation
``nu``.  The frame is ``R_nu`` for cell problems and ``M_nu R_nu`` (an integer
matrix) for the lattice processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import DiscretizationError, InvalidDirectionError

_MAX_DENOMINATOR = 10**6


def _as_fraction(v: float) -> Fraction | None:
    fr = Fraction(v).limit_denominator(_MAX_DENOMINATOR)
    return fr if abs(float(fr) - v) <= 1e-12 else None


@dataclass(frozen=True, eq=False)
class RotationMap:
    nu: np.ndarray
    matrix: np.ndarray
    rational: bool
    exact: tuple | None = None  # Fraction entries when rational

    @property
    def multiplier(self) -> int:
        """Smallest positive M with M * matrix integral (rational frames only)."""
        if self.exact is None:
            raise InvalidDirectionError("integer multiplier needs a rational direction")
        return math.lcm(*(e.denominator for row in self.exact for e in row))

    def integer_frame(self) -> tuple[int, np.ndarray]:
        m = self.multiplier
        mat = np.array([[int(e * m) for e in row] for row in self.exact], dtype=np.int64)
        return m, mat


def _rodrigues(nu):
    """Rotation in the (e_n, nu) plane taking e_n to nu; entries are rational in nu."""
    n = len(nu)
    c = nu[n - 1]
    one = nu[0] * 0 + 1
    out = [[one if i == j else 0 * one for j in range(n)] for i in range(n)]
    # K = nu e_n^T - e_n nu^T restricted; R = I + K + K^2 / (1 + c)
    k = [[0 * one] * n for _ in range(n)]
    for i in range(n):
        k[i][n - 1] = k[i][n - 1] + nu[i]
        k[n - 1][i] = k[n - 1][i] - nu[i]
    k[n - 1][n - 1] = 0 * one
    k2 = [[sum(k[i][l] * k[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            out[i][j] = out[i][j] + k[i][j] + k2[i][j] / (1 + c)
    return out


def _rotation_entries(nu):
    n = len(nu)
    if n == 1:
        return [[nu[0] / abs(nu[0])]]
    if n == 2:
        a, b = nu
        return [[b, a], [-a, b]]
    if nu[n - 1] >= 0:
        return _rodrigues(nu)
    return [[-e for e in row] for row in _rodrigues([-v for v in nu])]


def rotation_matrix(nu) -> RotationMap:
    """Orthogonal ``R`` with ``R e_n = nu``, continuous on each hemisphere."""
    v = np.atleast_1d(np.asarray(nu, dtype=float))
    norm = float(np.linalg.norm(v))
    if v.ndim != 1 or norm == 0.0:
        raise InvalidDirectionError("direction must be a nonzero vector")
    if abs(norm - 1.0) > 1e-10:
        raise InvalidDirectionError(f"direction must be unit, got norm {norm!r}")
    fracs = [_as_fraction(float(c)) for c in v]
    rational = all(fr is not None for fr in fracs) and sum(fr * fr for fr in fracs) == 1
    if rational:
        exact = tuple(tuple(row) for row in _rotation_entries(fracs))
        mat = np.array([[float(e) for e in row] for row in exact])
    else:
        exact = None
        mat = np.array(_rotation_entries(list(v)), dtype=float)
    return RotationMap(v.copy(), mat, rational, exact)


@dataclass(frozen=True, eq=False)
class FaceMask:
    """Faces of one role, stored per axis on the full face lattice.

    ``masks[a]`` has ``cells + 1`` entries along axis ``a`` (positions
    ``0..N_a``); positions ``0`` and ``N_a`` are boundary faces.
    """

    role: str
    masks: tuple[np.ndarray, ...]

    @property
    def count(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def interior(self, axis: int) -> np.ndarray:
        sl = [slice(None)] * self.masks[axis].ndim
        sl[axis] = slice(1, -1)
        return self.masks[axis][tuple(sl)]


@dataclass(frozen=True, eq=False)
class FaceGeometry:
    """Interior faces normal to one frame axis, with their bulk quadrature.

    Quadrature slot 0 / 1 sit at ``-h/4`` / ``+h/4`` from the face; slots 2 / 3
    carry the outer half of the first / last cell of each lattice line.  Slots
    0 and 2 belong to the cell on the minus side, 1 and 3 to the plus side.
    """

    axis: int
    x: np.ndarray  # (*shape, n) face centers
    xq: np.ndarray  # (*shape, 4, n)
    wq: np.ndarray  # (*shape, 4)
    normal: np.ndarray  # (n,)
    area: float
    minus_index: tuple[np.ndarray, ...]
    plus_index: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x.shape[:-1]


@dataclass(frozen=True, eq=False)
class GridDomain:
    translation: np.ndarray
    frame: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    h: float
    bc_width: float
    side: float | None = None
    elongation: int = 1

    def __post_init__(self):
        n = len(self.translation)
        if self.frame.shape != (n, n) or self.lower.shape != (n,) or self.upper.shape != (n,):
            raise DiscretizationError("inconsistent domain dimensions")
        counts = (self.upper - self.lower) / self.h
        if np.any(np.abs(counts - np.round(counts)) > 1e-9 * np.maximum(counts, 1.0)):
            raise DiscretizationError(
                f"spacing h={self.h} does not divide the box extents {self.upper - self.lower}"
            )
        if np.any(np.round(counts) < 4):
            raise DiscretizationError("need at least 4 cells per axis")
        if self.bc_width < 2 * self.h_phys * (1 - 1e-12):
            raise DiscretizationError("bc_width must be at least twice the spacing")

    # -- basic attributes -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.translation)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round(c)) for c in (self.upper - self.lower) / self.h)

    @cached_property
    def scale(self) -> float:
        return float(np.linalg.norm(self.frame[:, 0]))

    @property
    def h_phys(self) -> float:
        return self.scale * self.h

    @property
    def nu(self) -> np.ndarray:
        return self.frame[:, -1] / self.scale

    @property
    def center(self) -> np.ndarray:
        return self.to_physical(0.5 * (self.lower + self.upper))

    @property
    def cell_volume(self) -> float:
        return self.h_phys**self.n

    @property
    def volume(self) -> float:
        return float(np.prod(self.shape)) * self.cell_volume

    def to_physical(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.translation + np.einsum("ij,...j->...i", self.frame, q)

    def translated(self, z) -> "GridDomain":
        return GridDomain(self.translation + np.asarray(z, dtype=float), self.frame, self.lower,
                          self.upper, self.h, self.bc_width, self.side, self.elongation)

    # -- cells ------------------------------------------------------------
    def axis_centers(self, axis: int) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    @cached_property
    def cell_centers_frame(self) -> np.ndarray:
        grids = np.meshgrid(*(self.axis_centers(a) for a in range(self.n)), indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.to_physical(self.cell_centers_frame)

    def strip_cells(self) -> int:
        """Cells per side lying within ``bc_width`` of the boundary."""
        return int(math.ceil(self.bc_width / self.h_phys - 1e-9))

    def interface_position(self, x0) -> int | None:
        """Face index along the last axis separating cells on either side of the
        plane through ``x0`` normal to ``nu``; None if the plane misses the interior."""
        s0 = float(np.dot(self.nu, np.asarray(x0, dtype=float) - self.translation)) / self.scale
        p = int(np.count_nonzero(self.axis_centers(self.n - 1) < s0))
        return p if 0 < p < self.shape[-1] else None

    # -- faces ------------------------------------------------------------
    def face_geometry(self, axis: int) -> FaceGeometry:
        return self._faces[axis]

    @cached_property
    def _faces(self) -> tuple[FaceGeometry, ...]:
        out = []
        n, h, hp = self.n, self.h, self.h_phys
        for a in range(n):
            axes = []
            for b in range(n):
                if b == a:
                    axes.append(self.lower[a] + np.arange(1, self.shape[a]) * h)
                else:
                    axes.append(self.axis_centers(b))
            grids = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            shape = grids.shape[:-1]
            e = np.zeros(n)
            e[a] = 1.0
            qq = np.empty(shape + (4, n))
            qq[..., 0, :] = grids - 0.25 * h * e
            qq[..., 1, :] = grids + 0.25 * h * e
            qq[..., 2, :] = grids
            qq[..., 2, a] = self.lower[a] + 0.25 * h
            qq[..., 3, :] = grids
            qq[..., 3, a] = self.upper[a] - 0.25 * h
            w = np.zeros(shape + (4,))
            half = 0.5 * hp**n
            w[..., 0:2] = half
            pos = np.arange(1, self.shape[a]).reshape([-1 if b == a else 1 for b in range(n)])
            w[..., 2] = np.where(pos == 1, half, 0.0)
            w[..., 3] = np.where(pos == self.shape[a] - 1, half, 0.0)
            idx = np.indices(shape)
            minus = tuple(idx)
            plus = tuple(idx[b] + (1 if b == a else 0) for b in range(n))
            out.append(FaceGeometry(
                axis=a, x=self.to_physical(grids), xq=self.to_physical(qq), wq=w,
                normal=self.frame[:, a] / self.scale, area=hp ** (n - 1),
                minus_index=minus, plus_index=plus,
            ))
        return tuple(out)


def rotated_rectangle(x, r: float, k: int = 1, nu=None, h: float = 0.125,
                      bc_width: float | None = None) -> GridDomain:
    """Rectangle with side ``k r`` across ``nu`` and ``r`` along it, centred at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(x)
    if nu is None:
        nu = np.eye(n)[-1]
    if r <= 0 or h <= 0:
        raise DiscretizationError("side and spacing must be positive")
    if int(k) != k or k < 1:
        raise DiscretizationError("elongation must be an integer >= 1")
    ratio = r / h
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise DiscretizationError(f"spacing h={h} is not commensurate with r={r}")
    rot = rotation_matrix(nu)
    half = np.full(n, 0.5 * k * r)
    half[-1] = 0.5 * r
    return GridDomain(
        translation=x, frame=rot.matrix, lower=-half, upper=half, h=float(h),
        bc_width=2.0 * h if bc_width is None else float(bc_width), side=float(r),
        elongation=int(k),
    )


def box_domain(frame, lower, upper, h: float, bc_width: float | None = None,
               translation=None) -> GridDomain:
    """Domain ``translation + frame([lower, upper))`` with frame spacing ``h``."""
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    n = frame.shape[0]
    t = np.zeros(n) if translation is None else np.asarray(translation, dtype=float)
    scale = float(np.linalg.norm(frame[:, 0]))
    return GridDomain(t, frame, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
                      float(h), 2.0 * h * scale if bc_width is None else float(bc_width))


def boundary_strip(domain: GridDomain, axes=None) -> np.ndarray:
    """Cells within ``bc_width`` of the faces normal to the given axes (default all)."""
    s = domain.strip_cells()
    mask = np.zeros(domain.shape, dtype=bool)
    for a in range(domain.n) if axes is None else axes:
        idx = np.arange(domain.shape[a])
        hit = (idx < s) | (idx >= domain.shape[a] - s)
        mask |= hit.reshape([-1 if b == a else 1 for b in range(domain.n)])
    return mask


def perpendicular_strip(domain: GridDomain) -> np.ndarray:
    """Cells near the two faces whose outward normal is ``+-nu``."""
    return boundary_strip(domain, axes=(domain.n - 1,))


def _face_lattice(domain: GridDomain, axis: int) -> tuple[int, ...]:
    return tuple(c + 1 if b == axis else c for b, c in enumerate(domain.shape))


def face_masks(domain: GridDomain) -> tuple[FaceMask, FaceMask, FaceMask]:
    """Split boundary faces by orientation and mark the mid-plane interface."""
    n = domain.n
    perp, par, inter = [], [], []
    for a in range(n):
        shape = _face_lattice(domain, a)
        pos = np.arange(shape[a]).reshape([-1 if b == a else 1 for b in range(n)])
        boundary = np.broadcast_to((pos == 0) | (pos == shape[a] - 1), shape)
        empty = np.zeros(shape, dtype=bool)
        perp.append(boundary.copy() if a == n - 1 else empty.copy())
        par.append(empty.copy() if a == n - 1 else boundary.copy())
        face = empty.copy()
        if a == n - 1:
            p = domain.interface_position(domain.center)
            if p is not None:
                face = np.broadcast_to(pos == p, shape).copy()
        inter.append(face)
    return (FaceMask("perpendicular", tuple(perp)), FaceMask("parallel", tuple(par)),
            FaceMask("interface", tuple(inter)))


def interface_mask(domain: GridDomain, x0) -> tuple[np.ndarray, ...]:
    """Interior-face masks (per axis) for the plane through ``x0`` normal to ``nu``."""
    out = []
    p = domain.interface_position(x0)
    for a in range(domain.n):
        shape = tuple(c - 1 if b == a else c for b, c in enumerate(domain.shape))
        m = np.zeros(shape, dtype=bool)
        if a == domain.n - 1 and p is not None:
            sl = [slice(None)] * domain.n
            sl[a] = p - 1
            m[tuple(sl)] = True
        out.append(m)
    return tuple(out)


def cube_vertices(rot: RotationMap) -> np.ndarray:
    """Vertices of ``R([-1/2, 1/2]^n)`` sorted lexicographically."""
    n = rot.matrix.shape[0]
    corners = np.array(np.meshgrid(*([[-0.5, 0.5]] * n), indexing="ij")).reshape(n, -1).T
    pts = np.round(corners @ rot.matrix.T, 12) + 0.0
    return pts[np.lexsort(pts.T[::-1])]
