import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfbm import CapabilityError, ConfigError, DomainError, SpectralSpace, family_names, make_family, register_family
from mfbm.coefficients import CONSTANT_NAMES, as_g, zero_family


def test_registry():
    assert {"zero", "linear_dissipative", "bounded_nonlinear"} <= set(family_names())
    with pytest.raises(ConfigError, match="unknown"):
        make_family("nope", SpectralSpace([1.0]))
    with pytest.raises(ConfigError, match="bad parameters"):
        make_family("linear_dissipative", SpectralSpace([1.0]), {"bogus": 1})
    with pytest.raises(ConfigError):
        make_family("zero", SpectralSpace([1.0]), q2=[1.0, 1.0])
    register_family("zero_alias", lambda space, lam2: zero_family(space, lam2))
    assert make_family("zero_alias", SpectralSpace([1.0])).name == "zero"


def test_declared_constants_complete():
    sp = SpectralSpace([1.0, 4.0])
    for name in ("zero", "linear_dissipative", "bounded_nonlinear"):
        fam = make_family(name, sp)
        assert set(fam.declared) == set(CONSTANT_NAMES)


def test_linear_ergodicity_guard():
    with pytest.raises(DomainError):
        make_family("linear_dissipative", SpectralSpace([1.0]), {"a": -2.0})


def _gh_average(fn, mean, var, n=60):
    # E fn(mean + sqrt(var) Z) by Gauss-Hermite
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    return np.sum(w[:, None] * fn(mean + np.sqrt(var) * z[:, None]), axis=0)


@pytest.mark.parametrize("name", ["linear_dissipative", "bounded_nonlinear"])
def test_bbar_is_the_frozen_average(name):
    sp = SpectralSpace([1.0, 3.0])
    lam2 = np.array([1.0, 0.5])
    fam = make_family(name, sp, {"b_x": 0.7, "b_y": 1.3, "a": 0.8, "c": 0.9, "sigma_f": 1.1}, q2=lam2)
    x = np.array([0.4, -1.2])
    kap = sp.eigenvalues + 0.8
    Fr = fam.F_rest(x, np.zeros(2))
    mean = Fr / kap
    var = 1.1 ** 2 * lam2 / (2 * kap)
    avg = _gh_average(lambda y: fam.b(x, y), mean, var)
    assert np.allclose(avg, fam.bbar(x), rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_Dbbar_matches_finite_differences(x):
    fam = make_family("bounded_nonlinear", SpectralSpace([1.0, 2.0]), {"c": 1.5})
    x = np.array(x)
    h = 1e-6
    J = np.column_stack([(fam.bbar(x + h * e) - fam.bbar(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(fam.Dbbar(x), J, atol=1e-7)


def test_broadcasting_over_replicas():
    fam = make_family("bounded_nonlinear", SpectralSpace([1.0, 2.0, 5.0]))
    x = np.zeros((7, 3))
    y = np.ones((7, 3))
    assert fam.b(x, y).shape == (7, 3)
    assert fam.F(x, y).shape == (7, 3)
    assert fam.G_matrix(x, y).shape == (7, 3, 3)
    assert fam.g_apply(x, y).shape == (7, 3)


def test_averaged_version_drops_y():
    fam = make_family("linear_dissipative", SpectralSpace([1.0]), {"b_y": 2.0})
    av = fam.averaged_version()
    x = np.array([0.3])
    assert not av.depends_on_y
    assert np.allclose(av.b(x, np.array([100.0])), fam.bbar(x))


def test_zero_family_has_no_missing_pieces():
    fam = make_family("zero", SpectralSpace([1.0]))
    assert np.all(fam.bbar(np.ones(1)) == 0)
    assert fam.additive_g
    g = as_g(2.0, 2)
    assert np.allclose(g(np.zeros(2)), 2 * np.eye(2))


def test_capability_errors():
    fam = make_family("linear_dissipative", SpectralSpace([1.0]))
    fam.bbar_fn = None
    fam.Dbbar_fn = None
    assert not fam.has_closed_form_bbar
    with pytest.raises(CapabilityError):
        fam.bbar(np.zeros(1))
    with pytest.raises(CapabilityError):
        fam.Dbbar(np.zeros(1))
