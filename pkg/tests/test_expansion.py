import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from displat.classify import build_projections
from displat.errors import OutOfRange, Unimplemented, WeightTooSmall
from displat.expansion import (ORDERS, coefficient_kernel, coefficient_matrix, expansion_error,
                               expansion_report, inverse_singularity_fit, remainder_kernel)
from displat.resolvent import free_resolvent_matrix, spectral_coefficients

ks = st.integers(-60, 60)


def test_g0_examples():
    for n in (-3, 0, 5):
        for d in (0, 1, -1):
            assert coefficient_kernel(0, 0, 1, n, n + d) == 0
    assert coefficient_kernel(0, 0, 1, 0, 2) == pytest.approx(0.5, abs=1e-15)
    assert coefficient_kernel(0, 0, "real", 0, 4) == pytest.approx((64 - 4) / 12, abs=1e-14)


def test_printed_constants():
    for n, m in ((0, 0), (3, -7)):
        assert coefficient_kernel(16, -1, 1, n, m) == pytest.approx(1j / 32, abs=1e-16)
        assert coefficient_kernel(0, -3, 1, n, m) == pytest.approx((-1 + 1j) / 4, abs=1e-16)
        assert coefficient_kernel(0, -3, -1, n, m) == pytest.approx((-1 - 1j) / 4, abs=1e-16)


def test_g16_zero_order_closed_form():
    s2 = math.sqrt(2)
    for k in range(6):
        exact = (2 * s2 * k - (2 * s2 - 3) ** k) / (32 * s2)
        assert coefficient_kernel(16, 0, 1, 0, k) == pytest.approx(exact, abs=1e-15)


def test_vanishing_orders():
    k = np.arange(20)
    for sign in (1, -1):
        assert np.all(coefficient_kernel(0, -2, sign, 0, k) == 0)
        assert np.all(coefficient_kernel(0, 2, sign, 0, k) == 0)


def test_unimplemented_orders():
    for threshold, j in ((0, 4), (0, -4), (16, 3), (16, -2), (8, 0)):
        with pytest.raises(Unimplemented):
            coefficient_kernel(threshold, j, 1, 0, 1)


@settings(max_examples=40, deadline=None)
@given(ks, ks)
def test_conjugation_and_evenness(n, m):
    for threshold, orders in ORDERS.items():
        for j in orders:
            plus = coefficient_kernel(threshold, j, 1, n, m)
            assert coefficient_kernel(threshold, j, -1, n, m) == pytest.approx(np.conj(plus),
                                                                               abs=1e-12)
            assert coefficient_kernel(threshold, j, 1, m, n) == plus
            assert coefficient_kernel(threshold, j, 1, 0, n - m) == pytest.approx(plus, abs=0)


def test_coefficient_matrix_tabulation():
    rows, cols = np.arange(-3, 4), np.array([-1, 5])
    M = coefficient_matrix(0, 1, 1, rows, cols)
    ref = np.array([[coefficient_kernel(0, 1, 1, r, c) for c in cols] for r in rows])
    np.testing.assert_allclose(M, ref, atol=1e-15)


def test_leading_block_is_rank_one(V1, V_regular):
    for V in (V1, V_regular):
        P = build_projections(V).P
        for sign in (1, -1):
            G = coefficient_matrix(0, -3, sign, V.support, V.support)
            a = (-1 + sign * 1j) / 4 * V.l1_norm
            assert np.abs(V.v[:, None] * G * V.v[None, :] - a * P).max() < 1e-13


def test_truncated_series_approaches_kernel():
    """At small mu the full closed-form sum matches the exact kernel far better than mu^-3."""
    mu, k = 1e-3, np.arange(8)
    exact = free_resolvent_matrix(spectral_coefficients(mu, 1), k, [0])[:, 0]
    series = sum(mu ** j * coefficient_kernel(0, j, 1, k, 0) for j in ORDERS[0])
    assert np.abs(exact - series).max() < 1e-6


def test_sixteen_orders_against_mpmath_series():
    """Gt_0 and Gt_2 from the mpmath Taylor series of J R0((2 - mu)^4) J in x = sqrt(mu)."""
    def g(x, k):
        mu = x * x
        psi = mpmath.atan2(1 - mu / 2, mpmath.sqrt(mu * (1 - mu / 4)))
        s = mpmath.sin(psi)
        val = (1j * mpmath.expj(2 * psi * k) / mpmath.cos(psi)
               - mpmath.exp(-2 * mpmath.asinh(s) * k) / mpmath.sqrt(1 + s * s)) / (32 * s ** 3)
        # g(x) = sum_{j >= 0} Gt_j x^{j+1} once the x^0 term i/32 is removed.
        return (-1) ** k * val * x - mpmath.mpc(0, 1) / 32

    with mpmath.workdps(80):
        for k in range(5):
            c = mpmath.taylor(lambda x: g(x, k), mpmath.mpf("1e-60"), 3, direction=1)
            assert complex(c[1]) == pytest.approx(coefficient_kernel(16, 0, 1, 0, k), abs=1e-12)
            assert complex(c[2]) == pytest.approx(coefficient_kernel(16, 1, 1, 0, k), abs=1e-12)
            assert complex(c[3]) == pytest.approx(coefficient_kernel(16, 2, 1, 0, k), abs=1e-12)


def test_remainder_order_two_at_sixteen():
    errs = [np.abs(remainder_kernel(16, 2, mu, 1, 6)).max() for mu in (1e-2, 1e-3)]
    assert math.log10(errs[0] / errs[1]) == pytest.approx(1.5, abs=0.1)


def test_weight_precondition():
    with pytest.raises(WeightTooSmall):
        expansion_error(0, 3, 7.5, 0.1, 1)
    with pytest.raises(WeightTooSmall):
        expansion_error(16, 1, 3.5, 0.1, 1)
    with pytest.raises(OutOfRange):
        expansion_error(0, 0, 5.0, 0.3, 1)


def test_ratio_test_first_order():
    e1 = expansion_error(0, 0, 5.0, 0.1, 1, half_width=100)
    e2 = expansion_error(0, 0, 5.0, 0.05, 1, half_width=100)
    assert 0.5 / 1.4 <= e2 / e1 <= 0.5 * 1.4
    assert e1 > 0 and e2 > 0


def test_order_fits():
    rep = expansion_report(0, 3)
    assert abs(rep.fitted_order - 4) <= 0.5 and rep.converged
    rep = expansion_report(16, 1, sign=-1)
    assert abs(rep.fitted_order - 1) <= 0.3 and rep.converged
    assert rep.to_dict()["sign"] == "-"


def test_singularity_fits(V1, V3, V_regular):
    assert abs(inverse_singularity_fit(V_regular, 1, 0).exponent) <= 0.15
    assert abs(inverse_singularity_fit(V1, 1, 0).exponent + 3) <= 0.2
    assert abs(inverse_singularity_fit(V1, -1, 0).exponent + 3) <= 0.2
    assert abs(inverse_singularity_fit(V3, 1, 16).exponent + 0.5) <= 0.15
