import numpy as np
import pytest

from fdhom.cell_solver import (
    CellProblem,
    Linear,
    Quantization,
    Schedule,
    Step,
    brute_force_oracle,
    solve_exact_1d,
    solve_heuristic,
    truncate,
)
from fdhom.errors import InfeasibleQuantizationError, OracleLimitError, PreconditionError
from fdhom.fields import energy, linear_field, total_variation
from fdhom.geometry import box_domain, rotated_rectangle
from fdhom.integrands import make_surface, make_volume, pair_constants

from instances import random_instance


def _problem(f, g, dom, datum, kind="F_G", bc="full"):
    return CellProblem(kind, f, g, dom, datum, bc)


def test_linear_datum_norm_value_one(norm_pair):
    f, g = norm_pair
    p = _problem(f, g, rotated_rectangle([0.5], 1.0, h=0.125), Linear([[1.0]]))
    res = solve_exact_1d(p, Quantization(levels=33))
    assert res.value == pytest.approx(1.0, abs=1e-12)
    assert res.exact


@pytest.mark.parametrize("a,expected", [(1.0, 1.0), (3.0, 2.0)])
def test_step_datum_diffuse_or_jump(a, expected):
    f = make_volume("iso_norm", {"c": a})
    g = make_surface("iso_norm", {"c": 2.0})
    p = _problem(f, g, rotated_rectangle([0.0], 2.0, h=0.25), Step([0.0], [1.0], [1.0]))
    q = Quantization(levels=9)
    oracle = brute_force_oracle(p, q)
    dp = solve_exact_1d(p, q)
    assert oracle.value == pytest.approx(expected, abs=1e-12)
    assert dp.value == pytest.approx(oracle.value, abs=1e-12)


def test_dp_matches_oracle_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(40):
        p, q = random_instance(rng)
        assert abs(solve_exact_1d(p, q).value - brute_force_oracle(p, q).value) <= 1e-12


def test_result_value_matches_recomputed_energy_and_bc():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p, q = random_instance(rng)
        res = solve_exact_1d(p, q)
        assert energy(p.volume, p.surface, res.argmin) == pytest.approx(res.value, rel=1e-10,
                                                                        abs=1e-12)
        pinned = p.pinned
        assert np.array_equal(res.argmin.values[pinned], p.datum_field.values[pinned])


def test_single_free_cell_by_hand(laminate_pair):
    f, g = laminate_pair
    dom = rotated_rectangle([0.0], 1.25, h=0.25, bc_width=0.5)
    assert (~_problem(f, g, dom, Linear([[1.0]])).pinned).sum() == 1
    p = _problem(f, g, dom, Linear([[1.0]]))
    q = Quantization(levels=9)
    oracle = brute_force_oracle(p, q)
    # hand enumeration: the free cell takes each of its states, each face the cheaper type
    from fdhom.cell_solver import _setup
    s = _setup(p, q)
    i = int(np.nonzero(~p.pinned)[0][0])
    base = p.datum_field.values[:, 0]
    best = np.inf
    for v in s.states((i,)):
        vals = base.copy()
        vals[i] = v
        e = 0.0
        for face in (i - 1, i):
            from fdhom.fields import face_cost_tables
            b, j = face_cost_tables(f, g, dom, 0, np.diff(vals)[:, None])
            e += min(b[face], j[face])
        others = [k for k in range(dom.shape[0] - 1) if k not in (i - 1, i)]
        b, j = face_cost_tables(f, g, dom, 0, np.diff(vals)[:, None])
        e += sum(b[k] for k in others)
        best = min(best, e)
    assert oracle.value == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("fam,c4", [("iso_norm", 0.0), ("norm_plus_root", 0.25)])
def test_zero_datum(fam, c4):
    f, g = make_volume(fam), make_surface("iso_norm")
    dom = rotated_rectangle([0.0], 2.0, h=0.25)
    p = _problem(f, g, dom, Linear([[0.0]]))
    q = Quantization(levels=5)
    assert f.constants.c4 == c4
    res = brute_force_oracle(p, q)
    # f(x, 0) = 0 for both families, so the zero field is optimal and costs nothing
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert solve_exact_1d(p, q).value == pytest.approx(0.0, abs=1e-12)
    assert res.value <= c4 * dom.volume + 1e-12


def test_oracle_refuses_large_instances(norm_pair):
    f, g = norm_pair
    p = _problem(f, g, rotated_rectangle([0.0], 4.0, h=0.25), Linear([[1.0]]))
    with pytest.raises(OracleLimitError) as err:
        brute_force_oracle(p, Quantization(levels=9))
    assert err.value.required == 16


def test_infeasible_quantization(norm_pair):
    f, g = norm_pair
    p = _problem(f, g, rotated_rectangle([0.0], 1.0, h=0.125), Linear([[4.0]]))
    with pytest.raises(InfeasibleQuantizationError):
        solve_exact_1d(p, Quantization(levels=9, span=1.0))


def test_competitor_and_coercivity_bounds(laminate_pair):
    f, g = laminate_pair
    c2 = pair_constants(f, g).c2
    for xi in (0.5, -1.0, 2.0):
        for r in (2.0, 4.0):
            p = _problem(f, g, rotated_rectangle([0.3], r, h=0.125), Linear([[xi]]))
            v = solve_exact_1d(p, Quantization(levels=65)).value
            assert v <= energy(f, g, p.datum_field) + 1e-12
            assert v >= c2 * abs(xi) * r - 1e-12
    p = _problem(f, g, rotated_rectangle([0.0], 2.0, h=0.125), Step([0.0], [1.5], [1.0]))
    v = solve_exact_1d(p, Quantization(levels=65)).value
    assert c2 * 1.5 - 1e-12 <= v <= energy(f, g, p.datum_field) + 1e-12


def test_monotone_refinement(laminate_pair):
    f, g = laminate_pair
    p = _problem(f, g, rotated_rectangle([0.2], 3.0, h=0.125), Linear([[1.0]]), kind="F_G")
    # doubling the number of intervals keeps every previous level
    vals = [solve_exact_1d(p, Quantization(levels=L, span=6.0, anchors=False)).value
            for L in (9, 17, 33, 65)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_subadditivity_over_partition():
    f = make_volume("laminate", {"values": [1.0, 3.0], "cell": 0.5})
    g = make_surface("exp_norm")
    h = 0.125
    xi = np.array([[1.0]])
    pieces = [(0.0, 1.0), (1.0, 1.5), (1.5, 3.0)]

    def value(a, b):
        dom = box_domain(np.eye(1), [a], [b], h)
        return solve_exact_1d(_problem(f, g, dom, Linear(xi)), Quantization(levels=33)).value

    assert value(0.0, 3.0) <= sum(value(a, b) for a, b in pieces) + 1e-9


def test_tie_break_prefers_bulk(norm_pair):
    f, g = norm_pair
    p = _problem(f, g, rotated_rectangle([0.0], 2.0, h=0.25), Step([0.0], [1.0], [1.0]))
    res = solve_exact_1d(p, Quantization(levels=9))
    assert not res.argmin.jumps[0].any()


def test_heuristic_is_upper_bound_close_to_dp(norm_pair):
    f, g = norm_pair
    p = _problem(f, g, rotated_rectangle([0.0], 2.0, h=0.125), Linear([[1.0]]))
    q = Quantization(levels=33)
    dp = solve_exact_1d(p, q).value
    he = solve_heuristic(p, Schedule(), q)
    assert not he.exact
    assert dp - 1e-12 <= he.value <= dp * 1.01 + 1e-12
    assert he.value <= energy(f, g, p.datum_field) + 1e-12


def test_heuristic_2d_step_bound(norm_pair):
    f, g = make_volume("iso_norm", dims=(1, 2)), make_surface("iso_norm", dims=(1, 2))
    r = 2.0
    dom = rotated_rectangle([0.0, 0.0], r, h=0.125)
    assert dom.shape == (16, 16)
    p = _problem(f, g, dom, Step([0.0, 0.0], [1.0], [0.0, 1.0]))
    res = solve_heuristic(p, Schedule(sweeps=10), Quantization(levels=9))
    assert res.value <= 1.05 * r + 1e-12


def test_partial_bc_needs_linear(norm_pair):
    f, g = norm_pair
    with pytest.raises(PreconditionError):
        _problem(f, g, rotated_rectangle([0.0], 1.0, h=0.125), Step([0.0], [1.0], [1.0]),
                 bc="perpendicular_only")


def test_truncate_examples():
    dom = rotated_rectangle([0.0], 1.0, h=0.125)
    datum = linear_field([[0.5]], dom)
    pinned = np.zeros(dom.shape, dtype=bool)
    u = datum.with_values(np.linspace(-1, 1, 8))
    assert np.array_equal(truncate(u, datum, 2.0, pinned).values, u.values)
    vals = np.zeros(8)
    vals[4] = 10.0
    t = truncate(u.with_values(vals), datum, 2.0, pinned)
    assert t.values[4, 0] == 2.0 and np.all(np.delete(t.values[:, 0], 4) == 0)
    with pytest.raises(PreconditionError):
        truncate(u, linear_field([[10.0]], dom), 2.0, np.ones(dom.shape, dtype=bool))


def test_truncation_does_not_inflate_energy(norm_pair, rng):
    f, g = norm_pair
    dom = rotated_rectangle([0.0], 2.0, h=0.125)
    p = _problem(f, g, dom, Linear([[1.0]]))
    datum = p.datum_field
    M = 4 * float(np.max(np.abs(datum.values)))
    opt = solve_exact_1d(p, Quantization(levels=33)).argmin
    for _ in range(50):
        noise = rng.normal(scale=3.0, size=dom.shape) * (~p.pinned)
        u = opt.with_values(opt.values[:, 0] + noise)
        t = truncate(u, datum, M, p.pinned)
        assert np.max(np.abs(t.values)) <= M
        assert np.array_equal(t.values[p.pinned], datum.values[p.pinned])
        assert np.sum(np.abs(t.values - datum.values)) <= np.sum(np.abs(u.values - datum.values)) + 1e-12
        assert energy(f, g, t) <= energy(f, g, u) + 1e-3
        assert total_variation(t) <= total_variation(u) + 1e-12
