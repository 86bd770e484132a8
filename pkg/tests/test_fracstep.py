import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from tvfrac.errors import InvalidArgument
from tvfrac.fracstep import L1Scheme, TimeGrid, caputo_apply, eta, gamma, l1_weights


@given(st.floats(min_value=0.05, max_value=30.0))
def test_gamma_agrees_with_mpmath(z):
    assert gamma(z) == pytest.approx(float(mpmath.gamma(z)), rel=1e-13)


def test_gamma_reflection_branch():
    assert gamma(0.25) == pytest.approx(math.gamma(0.25), rel=1e-13)
    assert gamma(-0.5) == pytest.approx(math.gamma(-0.5), rel=1e-13)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.8, 0.95])
def test_l1_weights_closed_form_and_monotone(alpha):
    b = l1_weights(alpha, 40)
    j = np.arange(40)
    np.testing.assert_allclose(b, (j + 1) ** (1 - alpha) - j ** (1 - alpha), rtol=1e-14)
    assert b[0] == 1.0
    assert np.all(b > 0) and np.all(np.diff(b) < 0)
    # telescoping sum
    assert b.sum() == pytest.approx(40 ** (1 - alpha), rel=1e-13)


def test_l1_weights_rejects_bad_alpha():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidArgument):
            l1_weights(bad, 5)


def test_eta_and_alpha_to_one_limit():
    assert eta(0.3, 0.02) == pytest.approx(math.gamma(1.7) * 0.02**0.3, rel=1e-13)
    assert eta(1 - 1e-9, 0.01) == pytest.approx(0.01, rel=1e-6)


def test_time_grid_trapezoid_weights():
    g = TimeGrid(2.0, 8)
    assert g.tau == 0.25
    assert g.quad_weights.sum() == pytest.approx(2.0)
    # trapezoid is exact on linear functions
    assert g.quad_weights @ (3 * g.t + 1) == pytest.approx(3 * 2 + 2.0)
    with pytest.raises(InvalidArgument):
        TimeGrid(1.0, 0)


def test_scheme_history_coefficients():
    s = L1Scheme(0.4, 0.1, 10)
    np.testing.assert_allclose(s.d[:-1], s.b[:-1] - s.b[1:])
    assert s.d[-1] == 0.0 and np.all(s.d[:-1] > 0)


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_caputo_of_piecewise_linear_is_exact(alpha):
    # the L1 formula integrates a piecewise-linear history exactly; t has
    # Caputo derivative t^(1-alpha) / Gamma(2-alpha)
    K = 16
    s = L1Scheme(alpha, 1 / K, K)
    t = np.arange(K + 1) / K
    for k in (1, 5, K):
        val = caputo_apply(s, t[: k + 1, None])
        assert val[0] == pytest.approx(t[k] ** (1 - alpha) / math.gamma(2 - alpha), rel=1e-12)


def test_caputo_of_t_squared_converges_at_order_two_minus_alpha():
    alpha = 0.4
    errs = []
    for K in (16, 32, 64, 128):
        s = L1Scheme(alpha, 1 / K, K)
        t = np.arange(K + 1) / K
        val = caputo_apply(s, (t**2)[:, None])[0]
        errs.append(abs(val - 2 / math.gamma(3 - alpha)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 2 - alpha - 0.1)
