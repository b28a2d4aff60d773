import numpy as np
import pytest
from scipy import special

from mfbm import (ContractError, DomainError, FracOrder, GridPath, IntegrabilityError, path_norms, rs_integral,
                  rs_integral_operator, sample_fbm_1d, uniform_grid, verify_beta_bounds, weyl_backward,
                  weyl_forward)
from mfbm.rough import SingularNodeWarning, beta_lemma_sides, exp_kernel_slope

pytestmark = pytest.mark.filterwarnings("ignore::mfbm.rough.SingularNodeWarning")

# mpmath quadrature of the backward derivative of g(t) = t at t = 0.4, alpha = 0.3 (oracle script)
BACKWARD_T_AT_04 = -0.955927813548707


def test_frac_order_domain():
    for a in (0.0, 0.5, 0.7):
        with pytest.raises(DomainError):
            FracOrder(a)
    with pytest.raises(DomainError):
        FracOrder(0.2).check_hurst(0.7)
    FracOrder(0.4).check_hurst(0.7)


def test_singular_node_is_dropped_with_warning():
    t = uniform_grid(1.0, 8)
    with pytest.warns(SingularNodeWarning):
        d = weyl_forward(GridPath(t, t), 0.3)
    assert d.times[0] == t[1]
    with pytest.warns(SingularNodeWarning):
        d = weyl_backward(GridPath(t, t), 0.3)
    assert d.times[-1] == t[-2]


def test_weyl_linear_paths_are_exact():
    t = uniform_grid(1.0, 10)
    a = 0.3
    f = weyl_forward(GridPath(t, 1.0 + 2 * t), a).values[:, 0]
    ref = t[1:] ** -a / special.gamma(1 - a) + 2 * t[1:] ** (1 - a) / special.gamma(2 - a)
    assert np.allclose(f, ref, rtol=1e-13)
    b = weyl_backward(GridPath(t, t), a)
    assert b.values[4, 0] == pytest.approx(BACKWARD_T_AT_04, rel=1e-12)


def test_weyl_window_start():
    t = uniform_grid(1.0, 20)
    d = weyl_forward(GridPath(t, t), 0.3, a=0.5).values[:, 0]
    s = t[t > 0.5] - 0.5
    assert np.allclose(d, 0.5 * s ** -0.3 / special.gamma(0.7) + s ** 0.7 / special.gamma(1.7), rtol=1e-12)


def test_young_integral_smooth():
    t = uniform_grid(1.0, 200)
    val = rs_integral(GridPath(t, np.sin(t)), GridPath(t, t ** 2), 0.3)[0]
    assert val == pytest.approx(2 * (np.sin(1) - np.cos(1)), rel=1e-4)


def test_young_integral_additive_over_windows():
    t = uniform_grid(1.0, 128)
    B = sample_fbm_1d(0.75, t, 2)
    f = GridPath(t, np.cos(3 * t))
    whole = rs_integral(f, B, 0.3)
    parts = rs_integral(f, B, 0.3, window=(0.0, 0.5)) + rs_integral(f, B, 0.3, window=(0.5, 1.0))
    assert np.allclose(whole, parts, rtol=1e-8)
    assert np.all(rs_integral(f, B, 0.3, window=(0.5, 0.5)) == 0)


def test_integration_by_parts_for_fbm():
    # int B dB = B_T^2 / 2 pathwise for H > 1/2
    t = uniform_grid(1.0, 256)
    B = sample_fbm_1d(0.8, t, 5)
    val = rs_integral(B, B, 0.3)[0]
    assert val == pytest.approx(0.5 * B.values[-1, 0] ** 2, rel=2e-2)


def test_norm_cap_raises():
    t = uniform_grid(1.0, 64)
    B = sample_fbm_1d(0.75, t, 1)
    with pytest.raises(IntegrabilityError):
        rs_integral(GridPath(t, 1e9 * np.sin(t)), B, 0.3)


def test_operator_integral_and_cm_range():
    t = uniform_grid(1.0, 64)
    u = GridPath(t, np.column_stack([t, t ** 2]))
    G = np.zeros((65, 2, 2))
    G[:, 0, 0] = 1.0
    G[:, 1, 1] = 2.0
    out = rs_integral_operator(G, u, 0.3)
    assert np.allclose(out, [1.0, 2.0], rtol=1e-6)
    with pytest.raises(ContractError):
        rs_integral_operator(G, u, 0.3, lambdas=[1.0, 0.0])
    out, lam, sup = rs_integral_operator(G, u, 0.3, return_bound=True)
    assert lam > 0 and sup >= 2.0


def test_path_norms_ordering():
    t = uniform_grid(1.0, 256)
    rep = path_norms(GridPath(t, t), 0.3)
    assert rep.holder == pytest.approx(2.0)
    assert rep.w_alpha_inf >= 1.0 and rep.w_alpha_1 >= 1.0
    rough = path_norms(sample_fbm_1d(0.6, t, 0), 0.3)
    smooth = path_norms(sample_fbm_1d(0.9, t, 0), 0.3)
    assert rough.w_alpha_inf > smooth.w_alpha_inf


def test_beta_inequalities():
    left, right, rhs = beta_lemma_sides(0.3, 0.8, 0.5, 1.0)
    assert left <= rhs and right <= rhs
    rep = verify_beta_bounds(100, 0)
    assert rep.constants["beta_left"] <= 1.0
    assert rep.constants["exp_kernel"] <= 1.0 + 1e-3
    # the right-hand Beta bound only holds for d <= 1 - a/2
    assert rep.details["second_violations_with_d_le_1_minus_a_half"] == 0


def test_exp_kernel_slopes():
    rhos = [10.0, 20.0, 40.0, 80.0]
    assert exp_kernel_slope(0.3, 0.2, rhos) == pytest.approx(-0.5, abs=0.02)
    assert exp_kernel_slope(0.3, 0.2, rhos, sup=False) == pytest.approx(-0.7, abs=0.02)
