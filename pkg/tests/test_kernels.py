import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mixfbm import kernels as kn
from mixfbm.errors import DomainError, InputError, SingularityError

mpmath.mp.dps = 30


def _mp_constants(H):
    H = mpmath.mpf(H)
    g = mpmath.gamma
    c = 1 / (2 * H * g(1.5 - H) * g(H + 0.5))
    lam = 2 * H * g(H + 0.5) * g(3 - 2 * H) / g(1.5 - H)
    return float(c), float(lam)


# ---------------------------------------------------------------- constants


def test_constants_brownian():
    p = kn.constants(0.5)
    assert p.c_H == pytest.approx(1, abs=1e-15)
    assert p.lambda_H == pytest.approx(1, abs=1e-15)
    assert p.beta_H == 0.0


def test_constants_three_quarters():
    p = kn.constants(0.75)
    assert p.lambda_H == pytest.approx(0.98326, abs=2e-5)
    # 1 / (2H Gamma(3/4) Gamma(5/4))
    assert p.c_H == pytest.approx(0.600211, abs=1e-6)


def test_constants_H_one():
    p = kn.constants(1.0)
    assert p.c_H == pytest.approx(1 / math.pi)
    assert p.lambda_H == pytest.approx(1.0)
    assert p.beta_H == 0.0


@pytest.mark.parametrize("H", [0.0, -0.1, 1.5, float("nan"), float("inf")])
def test_constants_domain(H):
    with pytest.raises(DomainError):
        kn.constants(H)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99))
def test_constants_match_high_precision(H):
    c, lam = _mp_constants(H)
    p = kn.constants(H)
    assert p.c_H == pytest.approx(c, rel=1e-12)
    assert p.lambda_H == pytest.approx(lam, rel=1e-12)
    assert p.beta_H == pytest.approx(c * c * (0.5 - H) ** 2 * lam / (2 - 2 * H), rel=1e-12, abs=1e-300)


def test_lambda_continuous_at_half():
    for H in (0.5 - 1e-4, 0.5 + 1e-4):
        assert abs(kn.constants(H).lambda_H - 1) <= 1e-3


# ---------------------------------------------------------------- covariances


def test_cov_fbm_examples():
    assert kn.cov_fbm(0.7, 1.3, 1.3) == pytest.approx(1.3**1.4)
    assert kn.cov_fbm(0.5, 0.3, 0.8) == pytest.approx(0.3)
    assert kn.cov_fbm(0.7, 1, 2) == pytest.approx(2**0.4)
    with pytest.raises(DomainError):
        kn.cov_fbm(0.7, -1, 2)


def test_cov_mixed_examples():
    assert kn.cov_mixed(0.3, 0, 2.0) == 0
    assert kn.cov_mixed(0.7, 1, 1) == pytest.approx(2)
    assert kn.cov_mixed(0.6, 1, 4) == pytest.approx(1 + 0.5 * (1 + 4**1.2 - 3**1.2))


@pytest.mark.parametrize("H", np.round(np.arange(0.1, 1.0, 0.1), 1))
def test_cov_mixed_psd(H):
    t = np.linspace(1 / 64, 1, 64)
    C = kn.cov_mixed(H, t[:, None], t[None, :])
    assert np.linalg.eigvalsh(C).min() >= -1e-10


# ---------------------------------------------------------------- kappa


def test_kappa_examples():
    assert kn.kappa(1.0, 0.2, 0.9) == pytest.approx(1.0)
    assert kn.kappa(0.75, 0, 1) == pytest.approx(0.375)
    assert kn.kappa(0.6, 0, 0.25) == pytest.approx(0.12 * 4**0.8)
    with pytest.raises(SingularityError):
        kn.kappa(0.7, 0.3, 0.3)
    with pytest.raises(DomainError):
        kn.kappa(0.4, 0.1, 0.3)


def test_kappa_is_second_mixed_derivative_of_cov():
    H, s, r, h = 0.7, 0.3, 0.8, 1e-4
    c = lambda a, b: kn.cov_fbm(H, a, b)
    d2 = (c(s + h, r + h) - c(s + h, r - h) - c(s - h, r + h) + c(s - h, r - h)) / (4 * h * h)
    assert kn.kappa(H, s, r) == pytest.approx(d2, rel=1e-5)


# ---------------------------------------------------------------- kappa bar


def test_kappa_bar_two_quadratures():
    assert kn.kappa_bar(0.3, 0.25, 0.75) == pytest.approx(kn.kappa_bar_direct(0.3, 0.25, 0.75), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.02, 0.98), st.floats(0.02, 0.98))
def test_kappa_bar_closed_factor(H, u, v):
    if abs(u - v) < 1e-3:
        return
    assert kn.kappa_bar_factor(H, u, v) == pytest.approx(kn.kappa_bar_N(H, u, v), rel=1e-9)


def test_kappa_bar_near_diagonal_bounded():
    H, u = 0.3, 0.4
    vals = [kn.kappa_bar(H, u, u + d) * d ** (2 * H) for d in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert max(vals) < 10 * min(vals)


def test_kappa_bar_errors():
    with pytest.raises(SingularityError):
        kn.kappa_bar(0.3, 0.5, 0.5)
    with pytest.raises(DomainError):
        kn.kappa_bar(0.3, 0.0, 0.5)
    with pytest.raises(DomainError):
        kn.kappa_bar(0.7, 0.2, 0.5)


# ---------------------------------------------------------------- chi, kappa tilde


def test_chi_zero():
    assert kn.chi(0.3, 0.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.01, 0.99))
def test_chi_closed_matches_quadrature(H, u):
    assert float(kn.chi_closed(H, u)) == pytest.approx(kn.chi(H, u), rel=1e-8)


def test_kappa_tilde_symmetric():
    assert kn.kappa_tilde(0.2, 0.4, 1.7) == pytest.approx(kn.kappa_tilde(0.2, 1.7, 0.4), rel=1e-14)


def test_kappa_tilde_is_covariance_of_rho_derivatives():
    # d/dt rho_tilde(r, t) = sqrt(beta) r^{1/2-H} t^{H-1/2} (t-r)^{-1/2-H}
    H = 0.3
    b = kn.constants(H).beta_H
    f = lambda r: b * r ** (1 - 2 * H) * 2 ** (H - 0.5) * (2 - r) ** (-0.5 - H)
    val, _ = integrate.quad(f, 0, 1, weight="alg", wvar=(0, -0.5 - H), epsabs=1e-14, epsrel=1e-12)
    assert kn.kappa_tilde(H, 1, 2) == pytest.approx(val, abs=1e-6)


def test_kappa_tilde_errors():
    with pytest.raises(SingularityError):
        kn.kappa_tilde(0.3, 1.0, 1.0)
    with pytest.raises(DomainError):
        kn.kappa_tilde(0.6, 1.0, 2.0)


# ---------------------------------------------------------------- rho tilde, rho


def test_rho_tilde_diagonal_zero():
    assert kn.rho_tilde(0.2, 0.7, 0.7) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.01, 0.99), st.floats(0.2, 5.0))
def test_rho_tilde_scaling_and_closed_form(H, x, t):
    direct = kn.rho_tilde(H, x * t, t)
    assert float(kn.rho_tilde_closed(H, x * t, t)) == pytest.approx(direct, rel=1e-9)
    assert direct == pytest.approx(t ** (0.5 - H) * kn.rho_tilde(H, x, 1.0), rel=1e-9)


def test_rho_tilde_domain():
    with pytest.raises(DomainError):
        kn.rho_tilde(0.3, 1.0, 0.5)
    with pytest.raises(DomainError):
        kn.rho(0.7, 1.0, 0.5)


@pytest.mark.parametrize("H", [0.2, 0.35, 0.6, 0.8])
@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_K1_closed_form_vs_operator(H, s):
    one = lambda r: 1.0
    ref = kn.operator_K(one, s, 1.0, H, df=lambda r: 0.0) if H < 0.5 else kn.operator_K(one, s, 1.0, H)
    assert float(kn.K1(H, s, 1.0)) == pytest.approx(ref, rel=1e-8)


def test_rho_brownian():
    assert kn.rho(0.5, 0.3, 1.0) == pytest.approx(1.0)


# ---------------------------------------------------------------- K_f, Q_f


def test_K_vanishes_on_diagonal():
    assert kn.operator_K(np.cos, 0.6, 0.6, 0.7) == 0.0


def test_K_finite_difference_matches_ibp():
    f, df = np.exp, np.exp
    a = kn.operator_K(f, 0.4, 1.0, 0.3, df=df)
    b = kn.operator_K(f, 0.4, 1.0, 0.3)
    assert a == pytest.approx(b, rel=1e-6)


@pytest.mark.parametrize("H", [0.2, 0.7, 0.9])
def test_Q_one_closed_form(H):
    s = 0.6
    c, lam = kn.constants(H).c_H, kn.constants(H).lambda_H
    assert c * kn.Q_one(H, s) == pytest.approx((2 - 2 * H) / lam * s ** (1 - 2 * H), rel=1e-12)
    df = (lambda r: 0.0) if H > 0.5 else None
    assert kn.operator_Q(lambda r: 1.0, s, H, df=df) == pytest.approx(float(kn.Q_one(H, s)), rel=1e-8)


def test_inner_product_identity():
    H = 0.7
    c = kn.constants(H).c_H
    g = lambda s: kn.operator_K(lambda r: 1.0, s, 1, H) * kn.operator_Q(lambda r: r, s, H, df=lambda r: 1.0)
    val, _ = integrate.quad(g, 0, 1, limit=200)
    assert c * val == pytest.approx(0.5, abs=1e-5)


def test_operators_reject_nonfinite():
    with pytest.raises(InputError):
        kn.operator_K(lambda r: float("nan"), 0.2, 1.0, 0.7)
    with pytest.raises(InputError):
        kn.operator_Q(lambda r: float("inf"), 0.2, 0.3)
