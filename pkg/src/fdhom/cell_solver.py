"""Minimum values of the discrete energy under boundary data.

Free cells take values in a quantized grid (plus the cell's own datum value,
so the datum itself is always feasible).  Each face picks the cheaper of its
bulk and jump costs; faces between two pinned cells keep the datum's type.
In 1D the problem is a chain and is solved exactly by min-plus dynamic
programming; in 2D a red-black descent with exact line sweeps is used.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleQuantizationError, OracleLimitError, PreconditionError
from .fields import DiscreteField, energy, face_cost_tables, linear_field, step_field
from .geometry import GridDomain, boundary_strip, perpendicular_strip
from .integrands import SurfaceIntegrand, VolumeIntegrand

PAIR_KINDS = ("F_G0", "FINF_G", "FINF_G0", "F_G")
BC_MODES = ("full", "perpendicular_only")


@dataclass(frozen=True, eq=False)
class Linear:
    """Affine datum ``xi (x - origin)``; the origin only shifts by a constant."""

    xi: np.ndarray
    origin: np.ndarray | None

    def __init__(self, xi, origin=None):
        object.__setattr__(self, "xi", np.atleast_2d(np.asarray(xi, dtype=float)))
        object.__setattr__(self, "origin",
                           None if origin is None else np.asarray(origin, dtype=float))

    def field(self, domain: GridDomain) -> DiscreteField:
        return linear_field(self.xi, domain, self.origin)


@dataclass(frozen=True, eq=False)
class Step:
    x0: np.ndarray
    zeta: np.ndarray
    nu: np.ndarray

    def __init__(self, x0, zeta, nu):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(x0, dtype=float)))
        object.__setattr__(self, "zeta", np.atleast_1d(np.asarray(zeta, dtype=float)))
        object.__setattr__(self, "nu", np.atleast_1d(np.asarray(nu, dtype=float)))

    def field(self, domain: GridDomain) -> DiscreteField:
        return step_field(self.x0, self.zeta, self.nu, domain)


@dataclass(frozen=True, eq=False)
class CellProblem:
    pair_kind: str
    volume: VolumeIntegrand
    surface: SurfaceIntegrand
    domain: GridDomain
    datum: Linear | Step
    bc_mode: str = "full"

    def __post_init__(self):
        if self.pair_kind not in PAIR_KINDS:
            raise PreconditionError(f"pair_kind must be one of {PAIR_KINDS}")
        if self.bc_mode not in BC_MODES:
            raise PreconditionError(f"bc_mode must be one of {BC_MODES}")
        if self.bc_mode == "perpendicular_only" and not isinstance(self.datum, Linear):
            raise PreconditionError("partial boundary conditions need a linear datum")

    @property
    def datum_field(self) -> DiscreteField:
        return self.datum.field(self.domain)

    @property
    def pinned(self) -> np.ndarray:
        if self.bc_mode == "full":
            return boundary_strip(self.domain)
        return perpendicular_strip(self.domain)

    def energy(self, u: DiscreteField) -> float:
        return energy(self.volume, self.surface, u)


@dataclass(frozen=True)
class Quantization:
    """Value grid: ``levels`` points spanning ``span`` around ``center``.

    ``span`` defaults to ``max(span_factor * datum range, min_span)`` and
    ``center`` to the datum midpoint.  With ``anchors`` the exact solvers also
    offer every free cell the datum values of the pinned cells bordering the
    free region, so constant extensions of the boundary data stay feasible.
    """

    levels: int = 129
    span: float | None = None
    center: float | None = None
    span_factor: float = 1.5
    min_span: float = 1.0
    anchors: bool = True

    def __post_init__(self):
        if self.levels < 3 or self.levels % 2 == 0 or self.levels > 2001:
            raise PreconditionError("levels must be an odd integer in [3, 2001]")

    def grid(self, datum: np.ndarray, pinned: np.ndarray) -> np.ndarray:
        lo, hi = float(datum.min()), float(datum.max())
        span = self.span if self.span is not None else max(self.span_factor * (hi - lo),
                                                           self.min_span)
        center = self.center if self.center is not None else 0.5 * (lo + hi)
        held = datum[pinned] if pinned.any() else datum
        need = max(abs(float(held.max()) - center), abs(float(held.min()) - center))
        if need > 0.5 * span * (1 + 1e-12):
            raise InfeasibleQuantizationError(
                f"span {span} around {center} cannot hold datum range [{held.min()}, {held.max()}]"
            )
        step = span / (self.levels - 1)
        return center + step * (np.arange(self.levels) - (self.levels - 1) // 2)


@dataclass
class SolveResult:
    value: float
    argmin: DiscreteField
    exact: bool
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# shared setup


@dataclass(frozen=True, eq=False)
class _Setup:
    problem: CellProblem
    grid: np.ndarray
    datum: np.ndarray  # (*shape,) scalar datum values
    datum_jumps: tuple[np.ndarray, ...]
    pinned: np.ndarray
    anchors: np.ndarray  # extra states offered to every free cell

    def extras(self, idx) -> np.ndarray:
        """Non-grid states of a cell: its own datum value, then the anchors."""
        if self.pinned[idx]:
            return np.array([self.datum[idx]])
        return np.append(self.datum[idx], self.anchors)

    def states(self, idx) -> np.ndarray:
        if self.pinned[idx]:
            return np.array([self.datum[idx]])
        return np.concatenate([self.grid, self.extras(idx)])

    def forced(self, axis: int) -> np.ndarray:
        d = self.problem.domain
        lo = self.pinned[d.face_geometry(axis).minus_index]
        hi = self.pinned[d.face_geometry(axis).plus_index]
        return lo & hi


def _border_values(datum: np.ndarray, pinned: np.ndarray) -> np.ndarray:
    """Distinct datum values of pinned cells sharing a face with a free cell."""
    border = np.zeros(pinned.shape, dtype=bool)
    for a in range(pinned.ndim):
        lo = [slice(None)] * pinned.ndim
        hi = [slice(None)] * pinned.ndim
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        border[lo] |= pinned[lo] & ~pinned[hi]
        border[hi] |= pinned[hi] & ~pinned[lo]
    return np.unique(datum[border])


def _setup(p: CellProblem, quant: Quantization, anchors: bool | None = None) -> _Setup:
    u0 = p.datum_field
    if u0.m != 1:
        raise PreconditionError("solvers support scalar fields only")
    datum = u0.values[..., 0]
    pinned = p.pinned
    use = quant.anchors if anchors is None else anchors
    extra = _border_values(datum, pinned) if use else np.empty(0)
    return _Setup(p, quant.grid(datum, pinned), datum, u0.jumps, pinned, extra)


def _face_choice(bulk: np.ndarray, jump: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cheaper face type; bulk wins ties."""
    is_jump = jump < bulk
    return np.where(is_jump, jump, bulk), is_jump


def _finish(s: _Setup, values: np.ndarray, jumps: Sequence[np.ndarray]) -> DiscreteField:
    return DiscreteField(values[..., None].astype(float), tuple(jumps), s.problem.domain)


def _best_types(s: _Setup, values: np.ndarray) -> tuple[list[np.ndarray], float]:
    """Optimal face types for fixed values, and the resulting energy."""
    p = s.problem
    jumps, total = [], 0.0
    for a in range(p.domain.n):
        delta = np.diff(values, axis=a)[..., None]
        bulk, jump = face_cost_tables(p.volume, p.surface, p.domain, a, delta)
        cost, is_jump = _face_choice(bulk, jump)
        forced = s.forced(a)
        is_jump = np.where(forced, s.datum_jumps[a], is_jump)
        cost = np.where(forced, np.where(s.datum_jumps[a], jump, bulk), cost)
        jumps.append(is_jump)
        total += float(cost.sum())
    return jumps, total


# ---------------------------------------------------------------------------
# exact chain solver


def chain_min_plus(
    n_states: Sequence[int],
    transition: Callable[[int], tuple[np.ndarray, np.ndarray]],
    unary: Sequence[np.ndarray] | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Minimise ``sum_i unary[i][s_i] + sum_i T_i[s_i, s_{i+1}]`` over a chain.

    ``transition(i)`` returns the cost matrix of link ``i`` and a per-entry
    payload (here: the jump flag).  Ties resolve to the lower state index.
    Returns the optimum, the optimal states and the payload along the path.
    """
    size = len(n_states)
    cost = np.zeros(n_states[0]) if unary is None else np.asarray(unary[0], dtype=float)
    back, payload = [], []
    for i in range(size - 1):
        t, flags = transition(i)
        total = cost[:, None] + t
        arg = np.argmin(total, axis=0)
        cost = total[arg, np.arange(t.shape[1])]
        if unary is not None:
            cost = cost + unary[i + 1]
        back.append(arg)
        payload.append(flags)
    states = np.empty(size, dtype=np.int64)
    states[-1] = int(np.argmin(cost))
    best = float(cost[states[-1]])
    flags_out = np.zeros(max(size - 1, 0), dtype=bool)
    for i in range(size - 2, -1, -1):
        states[i] = back[i][states[i + 1]]
        flags_out[i] = payload[i][states[i], states[i + 1]]
    return best, states, flags_out


class _ChainTables:
    """Per-face transition matrices over (grid + extra) states in 1D.

    Grid-to-grid differences form a Toeplitz table shared by all faces; the
    few differences involving a cell's extra states are tabulated directly.
    """

    def __init__(self, s: _Setup):
        p = s.problem
        d = p.domain
        self.s = s
        grid = s.grid
        L = grid.size
        step = grid[1] - grid[0]
        self.L = L
        N = d.shape[0]
        F = N - 1
        toe = step * np.arange(-(L - 1), L)
        self.toe_bulk, self.toe_jump = face_cost_tables(
            p.volume, p.surface, d, 0, np.broadcast_to(toe, (F, toe.size))[..., None])
        k = np.arange(L)
        self.toe_index = k[None, :] - k[:, None] + (L - 1)
        ex = [s.extras((i,)) for i in range(N)]
        E = max(e.size for e in ex)
        pad = np.array([np.pad(e, (0, E - e.size), constant_values=e[0]) for e in ex])
        self.sizes = [e.size for e in ex]
        lo, hi = pad[:-1], pad[1:]
        # rows: [extra_i -> grid | grid -> extra_{i+1} | extra_i -> extra_{i+1}]
        mixed = np.concatenate([
            (grid[None, None, :] - lo[:, :, None]).reshape(F, -1),
            (hi[:, None, :] - grid[None, :, None]).reshape(F, -1),
            (hi[:, None, :] - lo[:, :, None]).reshape(F, -1),
        ], axis=1)
        mb, mj = face_cost_tables(p.volume, p.surface, d, 0, mixed[..., None])
        cut = [E * L, 2 * E * L]
        self.eg = [t[:, :cut[0]].reshape(F, E, L) for t in (mb, mj)]
        self.ge = [t[:, cut[0]:cut[1]].reshape(F, L, E) for t in (mb, mj)]
        self.ee = [t[:, cut[1]:].reshape(F, E, E) for t in (mb, mj)]

    def __call__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        L, s = self.L, self.s
        a, b = self.sizes[i], self.sizes[i + 1]
        if s.pinned[i] and s.pinned[i + 1]:
            flag = bool(s.datum_jumps[0][i])
            c = self.ee[1][i, 0, 0] if flag else self.ee[0][i, 0, 0]
            return np.array([[c]]), np.array([[flag]])
        out = []
        for t in range(2):
            m = np.empty((L + a, L + b))
            m[:L, :L] = (self.toe_bulk, self.toe_jump)[t][i][self.toe_index]
            m[L:, :L] = self.eg[t][i, :a]
            m[:L, L:] = self.ge[t][i, :, :b]
            m[L:, L:] = self.ee[t][i, :a, :b]
            out.append(m)
        cost, is_jump = _face_choice(*out)
        rows = slice(L, L + 1) if s.pinned[i] else slice(None)
        cols = slice(L, L + 1) if s.pinned[i + 1] else slice(None)
        return cost[rows, cols], is_jump[rows, cols]


def solve_exact_1d(p: CellProblem, quant: Quantization | None = None) -> SolveResult:
    """Exact minimum of the quantized 1D problem by dynamic programming."""
    quant = quant or Quantization()
    d = p.domain
    if d.n != 1:
        raise PreconditionError("the chain solver needs a 1D domain")
    s = _setup(p, quant)
    tables = _ChainTables(s)
    n_states = [1 if s.pinned[i] else s.grid.size + tables.sizes[i] for i in range(d.shape[0])]
    value, states, flags = chain_min_plus(n_states, tables)
    vals = np.array([s.states((i,))[states[i]] for i in range(d.shape[0])])
    u = _finish(s, vals, [flags])
    return SolveResult(value, u, True, {"solver": "dp", "levels": quant.levels,
                                        "anchors": int(s.anchors.size),
                                        "span": float(s.grid[-1] - s.grid[0])})


def solve_chain_with_fidelity(
    f: VolumeIntegrand,
    g: SurfaceIntegrand,
    domain: GridDomain,
    target: np.ndarray,
    grid: np.ndarray,
) -> SolveResult:
    """Exact minimum over the value grid of ``energy + sum_i h |u_i - target_i|``, no pinning."""
    if domain.n != 1:
        raise PreconditionError("the chain solver needs a 1D domain")
    N = domain.shape[0]
    L = grid.size
    step = grid[1] - grid[0]
    toe = step * np.arange(-(L - 1), L)
    bulk, jump = face_cost_tables(f, g, domain, 0, np.broadcast_to(toe, (N - 1, toe.size))[..., None])
    cost_t, jump_t = _face_choice(bulk, jump)
    k = np.arange(L)
    index = k[None, :] - k[:, None] + (L - 1)
    unary = domain.h_phys * np.abs(grid[None, :] - np.asarray(target, dtype=float)[:, None])
    value, states, flags = chain_min_plus(
        [L] * N, lambda i: (cost_t[i][index], jump_t[i][index]), list(unary))
    u = DiscreteField(grid[states][:, None], (flags,), domain)
    return SolveResult(value, u, True, {"solver": "dp-fidelity", "levels": L})


# ---------------------------------------------------------------------------
# brute force


def brute_force_oracle(
    p: CellProblem,
    quant: Quantization | None = None,
    *,
    max_cells: int = 8,
    max_levels: int = 9,
    max_combinations: int = 5_000_000,
    chunk: int = 4096,
) -> SolveResult:
    """Enumerate every value assignment and every jump subset; test oracle only."""
    quant = quant or Quantization(levels=min(9, max_levels))
    d = p.domain
    if quant.levels > max_levels:
        raise OracleLimitError(f"levels {quant.levels} exceed {max_levels}", quant.levels)
    cells = int(np.prod(d.shape))
    s = _setup(p, quant)
    free = ~s.pinned
    limit_cells = max_cells if d.n == 1 else 49
    if d.n == 1 and cells > limit_cells:
        raise OracleLimitError(f"{cells} cells exceed the limit {limit_cells}", cells)
    toggles = []
    for a in range(d.n):
        toggles.append(~s.forced(a))
    n_toggle = int(sum(t.sum() for t in toggles))
    free_idx = list(zip(*np.nonzero(free)))
    n_assign = 1
    for idx in free_idx:
        n_assign *= s.states(idx).size
    required = n_assign * (1 << n_toggle)
    if required > max_combinations:
        raise OracleLimitError(f"enumeration needs {required} combinations", required)

    # every (values, jump subset) combination is scored; values in chunks, subsets as a matrix
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=n_toggle))).reshape(
        1 << n_toggle, n_toggle)
    choices = [s.states(idx) for idx in free_idx]
    grids = np.meshgrid(*choices, indexing="ij") if choices else []
    assignments = np.stack([g.ravel() for g in grids], axis=1) if choices else np.zeros((1, 0))
    flat_free = np.ravel_multi_index(tuple(np.array(free_idx).T), d.shape) if free_idx else []
    best_val, best_vals, best_bits = np.inf, None, None
    for lo in range(0, len(assignments), chunk):
        part = assignments[lo:lo + chunk]
        vals = np.broadcast_to(s.datum.ravel(), (len(part), s.datum.size)).copy()
        vals[:, flat_free] = part
        vals = vals.reshape((len(part),) + d.shape)
        fixed = np.zeros(len(part))
        tog_bulk, tog_jump = [], []
        for a in range(d.n):
            delta = np.moveaxis(np.diff(vals, axis=a + 1), 0, -1)[..., None]
            bulk, jump = face_cost_tables(p.volume, p.surface, d, a, delta)
            forced = s.forced(a)
            fixed_cost = np.where(s.datum_jumps[a][..., None], jump, bulk)
            fixed += fixed_cost[forced].sum(axis=0)
            tog_bulk.append(bulk[toggles[a]])
            tog_jump.append(jump[toggles[a]])
        tb = np.concatenate(tog_bulk, axis=0).T
        tj = np.concatenate(tog_jump, axis=0).T
        totals = fixed[:, None] + tb.sum(axis=1)[:, None] + (tj - tb) @ masks.T
        i = int(np.argmin(totals))
        if totals.flat[i] < best_val:
            r, c = divmod(i, masks.shape[0])
            best_val, best_vals, best_bits = totals.flat[i], vals[r], masks[c].astype(bool)
    jumps, pos = [], 0
    for a in range(d.n):
        jm = np.where(toggles[a], False, s.datum_jumps[a])
        k = int(toggles[a].sum())
        jm[toggles[a]] = best_bits[pos:pos + k]
        pos += k
        jumps.append(jm)
    u = _finish(s, best_vals, jumps)
    return SolveResult(energy(p.volume, p.surface, u), u, True,
                       {"solver": "enumeration", "combinations": required})


def enumeration_size(p: CellProblem, quant: Quantization) -> int:
    s = _setup(p, quant)
    n_toggle = int(sum((~s.forced(a)).sum() for a in range(p.domain.n)))
    n_assign = int(np.prod([s.states(idx).size for idx in zip(*np.nonzero(~s.pinned))]))
    return n_assign * (1 << n_toggle)


# ---------------------------------------------------------------------------
# heuristic descent


@dataclass(frozen=True)
class Schedule:
    sweeps: int = 60
    restarts: int = 2
    temperature: float = 0.25
    seed: int = 0
    golden_iterations: int = 24
    line_moves: bool = True


def _snap(s: _Setup, values: np.ndarray) -> np.ndarray:
    """Nearest admissible state of each cell (grid point or its own datum value)."""
    g = s.grid
    step = g[1] - g[0]
    k = np.clip(np.rint((values - g[0]) / step), 0, g.size - 1).astype(np.int64)
    on_grid = g[k]
    use_datum = np.abs(values - s.datum) < np.abs(values - on_grid)
    return np.where(use_datum, s.datum, on_grid)


def _local_costs(s: _Setup, values: np.ndarray, cand: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Cost of all faces touching ``active`` cells when they take ``cand`` values.

    ``cand`` has shape ``(*grid, K)``; active cells must form an independent set.
    """
    p = s.problem
    d = p.domain
    out = np.zeros(cand.shape)
    for a in range(d.n):
        geom = d.face_geometry(a)
        lo, hi = geom.minus_index, geom.plus_index
        lo_act, hi_act = active[lo], active[hi]
        touch = lo_act | hi_act
        if not touch.any():
            continue
        v_lo = np.where(lo_act[..., None], cand[lo], values[lo][..., None])
        v_hi = np.where(hi_act[..., None], cand[hi], values[hi][..., None])
        bulk, jump = face_cost_tables(p.volume, p.surface, d, a, (v_hi - v_lo)[..., None])
        cost, _ = _face_choice(bulk, jump)
        cost = np.where(touch[..., None], cost, 0.0)
        np.add.at(out, lo, np.where(lo_act[..., None], cost, 0.0))
        np.add.at(out, hi, np.where(hi_act[..., None], cost, 0.0))
    return out


def _neighbour_values(s: _Setup, values: np.ndarray) -> list[np.ndarray]:
    d = s.problem.domain
    out = []
    for a in range(d.n):
        for shift in (-1, 1):
            rolled = np.roll(values, shift, axis=a)
            edge = [slice(None)] * d.n
            edge[a] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = values[tuple(edge)]
            out.append(rolled)
    return out


def _cell_sweep(s: _Setup, values: np.ndarray, color: np.ndarray, sch: Schedule) -> np.ndarray:
    active = color & ~s.pinned
    if not active.any():
        return values
    nbrs = _neighbour_values(s, values)
    lo = np.minimum.reduce(nbrs)
    hi = np.maximum.reduce(nbrs)
    # golden-section search on [lo, hi] per cell
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - phi * (b - a)
    e = a + phi * (b - a)
    fc = _local_costs(s, values, c[..., None], active)[..., 0]
    fe = _local_costs(s, values, e[..., None], active)[..., 0]
    for _ in range(sch.golden_iterations):
        left = fc <= fe
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        c_new = np.where(left, b - phi * (b - a), e)
        e_new = np.where(left, c, a + phi * (b - a))
        fp = _local_costs(s, values, np.where(left, c_new, e_new)[..., None], active)[..., 0]
        fc, fe = np.where(left, fp, fe), np.where(left, fc, fp)
        c, e = c_new, e_new
    golden = _snap(s, 0.5 * (a + b))
    step = s.grid[1] - s.grid[0]
    cands = [values, s.datum, golden, _snap(s, golden - step), _snap(s, golden + step)]
    cands += [_snap(s, nb) for nb in nbrs]
    cand = np.stack(cands, axis=-1)
    local = _local_costs(s, values, cand, active)
    pick = np.argmin(local, axis=-1)
    new = np.take_along_axis(cand, pick[..., None], axis=-1)[..., 0]
    return np.where(active, new, values)


def _line_sweep(s: _Setup, values: np.ndarray, axis: int) -> np.ndarray:
    """Exact chain minimisation along every lattice line of ``axis``, others fixed."""
    p = s.problem
    d = p.domain
    if d.n == 1:
        return values
    other = 1 - axis
    L = s.grid.size
    states = np.concatenate([np.broadcast_to(s.grid, d.shape + (L,)), s.datum[..., None]], axis=-1)
    # perpendicular face costs against fixed neighbours, for every candidate state
    unary = np.zeros(d.shape + (L + 1,))
    geom = d.face_geometry(other)
    lo, hi = geom.minus_index, geom.plus_index
    bulk, jump = face_cost_tables(p.volume, p.surface, d, other,
                                  (values[hi][..., None] - states[lo])[..., None])
    np.add.at(unary, lo, _face_choice(bulk, jump)[0])
    bulk, jump = face_cost_tables(p.volume, p.surface, d, other,
                                  (states[hi] - values[lo][..., None])[..., None])
    np.add.at(unary, hi, _face_choice(bulk, jump)[0])
    new = values.copy()
    idx = np.arange(L + 1)
    for j in range(d.shape[other]):
        line = [slice(None), slice(None)]
        line[other] = j
        line = tuple(line)
        pinned = s.pinned[line]
        if pinned.all():
            continue
        st = states[line]
        N = st.shape[0]

        def trans(i, st=st, pinned=pinned, line=line):
            delta = st[i + 1][None, :] - st[i][:, None]
            b, jmp = _line_face_costs(p, d, axis, line, i, delta)
            cost, flag = _face_choice(b, jmp)
            if pinned[i] and pinned[i + 1]:
                fj = s.datum_jumps[axis][line][i]
                cost = np.where(fj, jmp, b)
            rows = [L] if pinned[i] else idx
            cols = [L] if pinned[i + 1] else idx
            return cost[np.ix_(rows, cols)], flag[np.ix_(rows, cols)]

        un = [unary[line][i][[L]] if pinned[i] else unary[line][i] for i in range(N)]
        n_states = [1 if pinned[i] else L + 1 for i in range(N)]
        _, path, _ = chain_min_plus(n_states, trans, un)
        vals = np.array([st[i][L] if pinned[i] else st[i][path[i]] for i in range(N)])
        new[line] = vals
    return new


def _line_face_costs(p: CellProblem, d: GridDomain, axis: int, line, i: int, delta: np.ndarray):
    geom = d.face_geometry(axis)
    fidx = list(line)
    fidx[axis] = i
    fidx = tuple(fidx)
    xq = geom.xq[fidx]
    wq = geom.wq[fidx]
    xi = (delta / d.h_phys)[..., None, None] * geom.normal
    fq = p.volume(xq, xi[..., None, :, :])
    bulk = np.sum(fq * wq, axis=-1)
    rest = float(np.sum(p.volume(xq, np.zeros((1, d.n))) * wq))
    jump = p.surface(geom.x[fidx], delta[..., None], geom.normal) * geom.area + rest
    return bulk, jump


def solve_heuristic(p: CellProblem, schedule: Schedule | None = None,
                    quant: Quantization | None = None) -> SolveResult:
    """Red-black descent with golden-section cell moves, exact line sweeps and
    face-type selection; several restarts, best field returned."""
    sch = schedule or Schedule()
    quant = quant or Quantization()
    d = p.domain
    if d.n not in (1, 2):
        raise PreconditionError("the heuristic supports n in {1, 2}")
    s = _setup(p, quant)
    parity = np.indices(d.shape).sum(axis=0) % 2 == 0
    rng = np.random.default_rng(sch.seed)
    best = (np.inf, None, None)
    total_sweeps = 0
    span = s.grid[-1] - s.grid[0]
    for r in range(max(1, sch.restarts)):
        if r == 0:
            vals = s.datum.astype(float).copy()
        else:
            noise = rng.normal(scale=sch.temperature * span, size=d.shape)
            vals = np.where(s.pinned, s.datum, _snap(s, s.datum + noise))
        _, cur = _best_types(s, vals)
        for _ in range(sch.sweeps):
            total_sweeps += 1
            prev = cur
            for color in (parity, ~parity):
                vals = _cell_sweep(s, vals, color, sch)
            if sch.line_moves and d.n == 2:
                for axis in range(d.n):
                    vals = _line_sweep(s, vals, axis)
            _, cur = _best_types(s, vals)
            if cur > prev - 1e-13 * max(abs(prev), 1.0):
                break
        jumps, cur = _best_types(s, vals)
        if cur < best[0]:
            best = (cur, vals.copy(), jumps)
    u = _finish(s, best[1], best[2])
    return SolveResult(float(energy(p.volume, p.surface, u)), u, False,
                       {"solver": "heuristic", "sweeps": total_sweeps,
                        "restarts": max(1, sch.restarts), "levels": quant.levels})


def solve(p: CellProblem, quant: Quantization | None = None, solver: str = "auto",
          schedule: Schedule | None = None) -> SolveResult:
    """Dispatch: exact chain solver in 1D, heuristic otherwise."""
    if solver == "dp" or (solver == "auto" and p.domain.n == 1):
        return solve_exact_1d(p, quant)
    if solver in ("heuristic", "auto"):
        return solve_heuristic(p, schedule, quant)
    raise PreconditionError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------------------
# truncation


def truncate(u: DiscreteField, datum: DiscreteField, M: float, pinned: np.ndarray | None = None
             ) -> DiscreteField:
    """Clamp values to ``[-M, M]`` keeping the datum on the pinned cells."""
    if M <= 0:
        raise PreconditionError("M must be positive")
    if pinned is None:
        pinned = np.zeros(u.domain.shape, dtype=bool)
    held = datum.values[pinned]
    if held.size and np.max(np.abs(held)) > 0.5 * M:
        raise PreconditionError("datum exceeds M/2 on the pinned cells")
    vals = np.clip(u.values, -M, M)
    vals = np.where(pinned[..., None], datum.values, vals)
    jumps = []
    for a, j in enumerate(u.jumps):
        moved = np.any(np.diff(vals, axis=a) != 0, axis=-1)
        jumps.append(j & moved)
    return DiscreteField(vals, tuple(jumps), u.domain)

