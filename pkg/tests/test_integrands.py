import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdhom.errors import ConfigError, PreconditionError
from fdhom.integrands import (
    SampleSpec,
    check_surface_admissibility,
    check_volume_admissibility,
    derivative_at_zero,
    make_surface,
    make_volume,
    modulus_lambda,
    recession,
)


def _s(a):
    return float(np.ravel(a)[0])


def _xi(v):
    return np.array([[[v]]])


def test_norm_volume_passes_everything():
    rep = check_volume_admissibility(make_volume("iso_norm"), SampleSpec.grid())
    assert rep.passed, rep.summary()


def test_smoothed_norm_passes_recession_decay():
    f = make_volume("smoothed_norm")
    spec = SampleSpec.grid(norms=(2.0, 5.0, 10.0, 50.0))
    rep = check_volume_admissibility(f, spec)
    assert rep.verdicts["f5"].passed
    assert rep.passed, rep.summary()


def test_quadratic_fails_linear_growth_with_witness():
    f = make_volume("quadratic", constants={"c3": 10.0})
    rep = check_volume_admissibility(f, SampleSpec.grid(norms=(0.5, 1.0, 10.0, 100.0)))
    v = rep.verdicts["f4"]
    assert not v.passed
    assert v.witness["|xi|"] == pytest.approx(100.0)


def test_norm_surface_passes():
    rep = check_surface_admissibility(make_surface("iso_norm"), SampleSpec.grid())
    assert rep.passed, rep.summary()


def test_exp_norm_surface_passes_and_small_jump_limit_is_norm():
    g = make_surface("exp_norm")
    rep = check_surface_admissibility(g, SampleSpec.grid())
    assert rep.passed, rep.summary()
    g0 = derivative_at_zero(g)
    val = g0(np.zeros(1), np.array([2.0]), np.array([1.0]))
    assert _s(val) == pytest.approx(2.0, abs=2 * 1e-8 * 2 + 1e-12)


def test_saturating_surface_fails_lower_bound_at_large_jump():
    g = make_surface("saturating", {"c2": 0.5})
    rep = check_surface_admissibility(g, SampleSpec.grid(norms=(0.1, 0.5, 1.0, 10.0)))
    v = rep.verdicts["g3"]
    assert not v.passed
    assert v.witness["|zeta|"] == pytest.approx(10.0)


def test_recession_of_norm_is_itself():
    finf = recession(make_volume("iso_norm"))
    assert _s(finf(np.zeros(1), _xi(3.0))) == pytest.approx(3.0)


def test_recession_of_smoothed_norm():
    finf = recession(make_volume("smoothed_norm"), (1e2, 1e3, 1e4))
    assert _s(finf(np.zeros(1), _xi(1.0))) == pytest.approx(1.0, abs=1e-4)


def test_recession_of_norm_plus_root_spread_decays():
    f = make_volume("norm_plus_root")
    s1 = recession(f, (1e1, 1e2, 1e3)).diagnostics["spread"]
    s2 = recession(f, (1e3, 1e4, 1e5)).diagnostics["spread"]
    # spread of |xi|^(1/2)/t over the last three t scales like t^(-1/2)
    assert s2 < s1
    assert np.log10(s1 / s2) == pytest.approx(1.0, abs=0.2)
    assert _s(recession(f, (1e4, 1e6, 1e8))(np.zeros(1), _xi(1.0))) == pytest.approx(1.0, abs=1e-3)


def test_derivative_at_zero_of_homogeneous_surface_is_identity():
    g = make_surface("iso_norm", {"c": 2.0})
    g0 = derivative_at_zero(g)
    z = np.array([[0.3], [-1.7]])
    assert np.array_equal(g0(np.zeros(1), z, np.array([1.0])), g(np.zeros(1), z, np.array([1.0])))


def test_norm_plus_square_small_jump_limit():
    g0 = derivative_at_zero(make_surface("norm_plus_square"))
    assert _s(g0(np.zeros(1), np.array([1.0]), np.array([1.0]))) == pytest.approx(1.0, abs=1e-6)


def test_modulus_lambda_closed_form_and_monotone():
    g = make_surface("exp_norm")
    spec = SampleSpec.grid()
    assert modulus_lambda(g, 1.0, spec) == pytest.approx(1 - np.exp(-1.0), abs=2e-3)
    ts = np.geomspace(1e-3, 10, 12)
    lam = modulus_lambda(g, ts, spec)
    assert np.all(np.diff(lam) >= 0)
    assert np.all(modulus_lambda(make_surface("iso_norm"), ts, spec) == 0)


def test_recession_rejects_short_schedule():
    with pytest.raises(PreconditionError):
        recession(make_volume("iso_norm"), (1e2, 1e3))


def test_unknown_family_and_parameter_are_config_errors():
    with pytest.raises(ConfigError):
        make_volume("nope")
    with pytest.raises(ConfigError):
        make_volume("iso_norm", {"foo": 1})


def test_laminate_alternates_by_cell():
    f = make_volume("laminate", {"values": [1.0, 3.0]})
    x = np.array([[0.5], [1.5], [2.5], [-0.5]])
    vals = f(x, np.broadcast_to(_xi(1.0), (4, 1, 1)))
    assert vals.tolist() == [1.0, 3.0, 1.0, 3.0]


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 100), st.floats(-5, 5))
def test_one_homogeneous_families_scale(xi, t, x):
    for f in (make_volume("iso_norm", {"c": 1.5}), make_volume("laminate")):
        a = f(np.array([x]), _xi(t * xi))
        b = t * f(np.array([x]), _xi(xi))
        assert _s(a) == pytest.approx(_s(b), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.sampled_from([-1.0, 1.0]))
def test_surface_symmetry_sampled(zeta, nu):
    for g in (make_surface("exp_norm"), make_surface("norm_plus_square"), make_surface("laminate")):
        a = g(np.array([0.3]), np.array([zeta]), np.array([nu]))
        b = g(np.array([0.3]), np.array([-zeta]), np.array([-nu]))
        assert _s(a) == pytest.approx(_s(b), rel=1e-12, abs=1e-15)
