import numpy as np
import pytest

from fdhom.fields import (
    DiscreteField,
    cantor_test_function,
    energy,
    linear_field,
    step_field,
    total_variation,
)
from fdhom.geometry import rotated_rectangle
from fdhom.integrands import make_surface, make_volume, pair_constants


def unit_1d(h=0.125):
    return rotated_rectangle([0.0], 1.0, h=h)


def test_zero_linear_field():
    u = linear_field([[0.0]], unit_1d())
    assert not u.values.any() and not u.jumps[0].any()


def test_linear_field_values():
    d = rotated_rectangle([0.0], 1.0, h=0.25)
    u = linear_field([[2.0]], d)
    assert u.values[:, 0].tolist() == [-0.75, -0.25, 0.25, 0.75]


def test_rotated_linear_field_difference_quotients():
    d = rotated_rectangle([0.0, 0.0], 2.0, nu=[0.6, 0.8], h=0.25)
    xi = np.array([[1.3, -0.4]])
    u = linear_field(xi, d)
    for a in range(2):
        q = u.differences(a)[..., 0] / d.h_phys
        normal = d.frame[:, a] / np.linalg.norm(d.frame[:, a])
        assert np.allclose(q, xi[0] @ normal, atol=1e-12)


def test_step_fields():
    d = unit_1d()
    u0 = step_field([0.0], [0.0], [1.0], d)
    assert not u0.values.any() and not u0.jumps[0].any()
    u = step_field([0.0], [1.0], [1.0], d)
    assert u.jumps[0].sum() == 1 and u.jumps[0][3]
    assert u.differences(0)[3, 0] == 1.0
    d2 = rotated_rectangle([0.0, 0.0], 1.0, h=0.125)
    u2 = step_field([0.0, 0.0], [1.0], [0.0, 1.0], d2)
    assert sum(j.sum() for j in u2.jumps) == 8


def test_energy_examples(norm_pair):
    f, g = norm_pair
    d = unit_1d()
    assert energy(f, g, linear_field([[2.0]], d)) == pytest.approx(2.0, abs=1e-12)
    assert energy(f, g, step_field([0.0], [1.5], [1.0], d)) == pytest.approx(1.5, abs=1e-12)


def test_energy_mixed_hand_sum():
    d = rotated_rectangle([0.0], 1.0, h=0.25)
    u = DiscreteField.from_values([0.0, 0.0, 1.0, 1.0], d, [np.array([False, True, False])])
    e = energy(make_volume("iso_norm"), make_surface("iso_norm", {"c": 2.0}), u)
    assert e == pytest.approx(2.0, abs=1e-12)


def test_total_variation_examples():
    d = unit_1d()
    assert total_variation(linear_field([[-3.0]], d)) == pytest.approx(3.0)
    assert total_variation(step_field([0.0], [2.0], [1.0], d)) == pytest.approx(2.0)


@pytest.mark.parametrize("vol,surf", [
    (("iso_norm", {}), ("iso_norm", {})),
    (("laminate", {"values": [1.0, 3.0], "cell": 0.25}), ("iso_norm", {"c": 2.0})),
    (("smoothed_norm", {"slope": 1.0}), ("exp_norm", {})),
])
def test_coercivity_on_random_fields(vol, surf, rng):
    f, g = make_volume(*vol), make_surface(*surf)
    c2 = pair_constants(f, g).c2
    d = rotated_rectangle([0.0], 2.0, h=0.125)
    for _ in range(50):
        vals = rng.normal(size=d.shape) * rng.uniform(0.1, 5)
        u = DiscreteField.from_values(vals, d, [rng.random(d.shape[0] - 1) < 0.3])
        assert energy(f, g, u) >= c2 * total_variation(u) - 1e-12


def test_growth_without_jumps(rng):
    f, g = make_volume("norm_plus_root"), make_surface("iso_norm")
    k = f.constants
    d = rotated_rectangle([0.0], 2.0, h=0.125)
    for _ in range(20):
        u = DiscreteField.from_values(rng.normal(size=d.shape), d)
        assert energy(f, g, u) <= k.c3 * total_variation(u) + k.c4 * d.volume + 1e-12


def test_translation_invariance_in_value(rng, laminate_pair):
    f, g = laminate_pair
    d = rotated_rectangle([0.0], 2.0, h=0.125)
    jumps = [rng.random(15) < 0.5]
    # dyadic values: adding the constant is exact, so the differences are too
    u = DiscreteField.from_values(np.round(rng.normal(size=d.shape) * 1024) / 1024, d, jumps)
    assert energy(f, g, u.shifted(3.25)) == energy(f, g, u)
    v = DiscreteField.from_values(rng.normal(size=d.shape), d, jumps)
    assert energy(f, g, v.shifted(np.pi)) == pytest.approx(energy(f, g, v), rel=1e-13)


@pytest.mark.parametrize("fam,func,deriv", [
    ("iso_norm", None, lambda x: np.cos(x)),
    ("smoothed_norm", None, lambda x: 2 * x),
    ("norm_plus_root", None, lambda x: np.exp(x)),
])
def test_first_order_consistency(fam, func, deriv):
    f, g = make_volume(fam), make_surface("iso_norm")
    x = np.linspace(0.0, 1.0, 200001)
    dens = np.ravel(f(x[:, None], deriv(x)[:, None, None]))
    ref = float(np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x)))
    prims = {"iso_norm": np.sin, "smoothed_norm": lambda t: t**2, "norm_plus_root": np.exp}
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        d = rotated_rectangle([0.5], 1.0, h=h)
        centers = d.cell_centers[:, 0]
        u = DiscreteField.from_values(prims[fam](centers), d)
        errs.append(abs(energy(f, g, u) - ref))
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.05


def test_cantor_test_function():
    z = cantor_test_function(0.0, 5)
    assert z.total_variation() == 0.0 and float(np.max(np.abs(z(np.linspace(0, 1, 11))))) == 0.0
    for level in (3, 8, 12):
        parts = cantor_test_function(1.0, level).variation_parts()
        assert parts["total"] == 1.0 and parts["jump"] == 0.0 and parts["absolutely_continuous"] == 0.0
    u = cantor_test_function(-2.0, 6)
    assert u.polar == -1.0 and u.variation_parts()["cantor"] == 2.0
    vals = cantor_test_function(1.0, 10)(np.linspace(0, 1, 1001))
    assert np.all(np.diff(vals) >= 0) and vals[0] == 0.0 and vals[-1] == pytest.approx(1.0)


def test_csv_dump_roundtrip_shape():
    d = rotated_rectangle([0.0], 1.0, h=0.25)
    text = step_field([0.0], [1.0], [1.0], d).to_csv()
    lines = [ln for ln in text.splitlines() if ln]
    assert len(lines) == 1 + 4
