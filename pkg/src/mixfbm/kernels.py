"""Constants, covariances, singular kernels and the fractional operators.

Scalar routines evaluate the defining integrals with adaptive quadrature and
serve as references. The vectorised ``*_factor`` and ``*_closed`` routines use
hypergeometric closed forms of the same integrals; the solver relies on them
because it needs millions of kernel values per assembled matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InputError, SingularityError

_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


@dataclass(frozen=True)
class HurstParams:
    """Hurst exponent with its derived constants.

    At ``H = 1`` the formula for ``beta_H`` divides by zero; the sentinel
    value 0.0 is returned there since no H=1 computation uses it.
    """

    H: float
    c_H: float
    lambda_H: float
    beta_H: float

    def as_dict(self) -> dict:
        return {"H": self.H, "c_H": self.c_H, "lambda_H": self.lambda_H, "beta_H": self.beta_H}


def _check_H(H: float, lo_open: bool = True) -> float:
    H = float(H)
    if not (0.0 < H <= 1.0) or not math.isfinite(H):
        raise DomainError(f"Hurst exponent must lie in (0, 1], got {H!r}")
    return H


def constants(H: float) -> HurstParams:
    """Return c_H, lambda_H and beta_H for the exponent ``H``."""
    H = _check_H(H)
    g = special.gamma
    c = 1.0 / (2.0 * H * g(1.5 - H) * g(H + 0.5))
    lam = 2.0 * H * g(H + 0.5) * g(3.0 - 2.0 * H) / g(1.5 - H)
    if H == 1.0:
        beta = 0.0
    else:
        beta = c * c * (0.5 - H) ** 2 * lam / (2.0 - 2.0 * H)
    return HurstParams(H=H, c_H=float(c), lambda_H=float(lam), beta_H=float(beta))


def _nonneg(*args):
    out = [np.asarray(a, dtype=float) for a in args]
    for a in out:
        if np.any(a < 0):
            raise DomainError("times must be nonnegative")
    return out


def cov_fbm(H: float, s, t):
    """Covariance of fractional Brownian motion."""
    H = _check_H(H)
    s, t = _nonneg(s, t)
    e = 2.0 * H
    out = 0.5 * (t**e + s**e - np.abs(t - s) ** e)
    return float(out) if out.ndim == 0 else out


def cov_mixed(H: float, s, t):
    """Covariance of B + B^H with independent components."""
    s, t = _nonneg(s, t)
    out = np.minimum(s, t) + cov_fbm(H, s, t)
    return float(out) if np.ndim(out) == 0 else out


def kappa(H: float, s, r):
    """kappa(s, r) = H(2H-1)|s-r|^{2H-2} for H > 1/2."""
    H = _check_H(H)
    if H <= 0.5:
        raise DomainError("kappa is defined for H > 1/2")
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    d = np.abs(s - r)
    if np.any(d == 0) and H < 1.0:
        raise SingularityError("kappa is singular on the diagonal")
    out = H * (2 * H - 1) * d ** (2 * H - 2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- kappa bar


def _small_H(H: float, name: str) -> float:
    H = _check_H(H)
    if H >= 0.5:
        raise DomainError(f"{name} is defined for H < 1/2")
    return H


def kappa_bar_factor(H: float, u, v):
    """Bounded factor N(u, v) with kappa_bar = |u-v|^{-2H} N, vectorised.

    Uses N = q^{1/2-H} 2F1(1-2H, 1/2-H; 3/2-H; q)/(1/2-H) where q is the ratio
    of the smaller to the larger of u/(1-u), v/(1-v). N vanishes when either
    argument sits at 0 or 1.
    """
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    out = np.zeros(u.shape)
    ok = (u > 0) & (u < 1) & (v > 0) & (v < 1)
    if np.any(ok):
        uu = u[ok] / (1 - u[ok])
        vv = v[ok] / (1 - v[ok])
        q = np.minimum(uu, vv) / np.maximum(uu, vv)
        a = 0.5 - H
        out[ok] = q**a * special.hyp2f1(1 - 2 * H, a, 1.5 - H, q) / a
    return out


def kappa_bar_N(H: float, u: float, v: float) -> float:
    """N(u, v) by adaptive quadrature of its x-integral."""
    H = _small_H(H, "kappa_bar")
    a_ = min(u / (1 - u), v / (1 - v))
    b_ = max(u / (1 - u), v / (1 - v))
    q = a_ / b_

    def f(x):
        return (1 + x) ** (-0.5 - H) * (1 + (1 - q) * x) ** (2 * H - 1)

    head, _ = integrate.quad(f, 0, 1, weight="alg", wvar=(-0.5 - H, 0), **_QUAD)
    tail, _ = integrate.quad(lambda x: x ** (-0.5 - H) * f(x), 1, np.inf, **_QUAD)
    return q ** (0.5 - H) * (head + tail)


def kappa_bar(H: float, u: float, v: float) -> float:
    """kappa_bar(u, v) for H < 1/2 through the bounded factor N."""
    H = _small_H(H, "kappa_bar")
    u, v = float(u), float(v)
    if not (0 < u < 1 and 0 < v < 1):
        raise DomainError("kappa_bar arguments must lie in (0, 1)")
    if u == v:
        raise SingularityError("kappa_bar is singular on the diagonal")
    return abs(u - v) ** (-2 * H) * kappa_bar_N(H, u, v)


def kappa_bar_direct(H: float, u: float, v: float) -> float:
    """kappa_bar from its defining r-integral; reference only."""
    H = _small_H(H, "kappa_bar")
    hi, lo = max(u, v), min(u, v)
    if hi == lo:
        raise SingularityError("kappa_bar is singular on the diagonal")
    val, _ = integrate.quad(
        lambda r: r ** (2 * H - 1) * (r - lo) ** (-0.5 - H),
        hi, 1, weight="alg", wvar=(-0.5 - H, 0), **_QUAD,
    )
    return (u * v) ** (0.5 - H) * val


# ---------------------------------------------------------------- chi, kappa tilde


def chi(H: float, u: float) -> float:
    """chi(u) = beta_H u^{1/2-H} L(u/(1-u)) with L by quadrature."""
    H = _small_H(H, "chi")
    u = float(u)
    if not (0 <= u <= 1):
        raise DomainError("chi argument must lie in [0, 1]")
    if u == 0:
        return 0.0
    if u == 1:
        return float(chi_closed(H, 1.0))
    beta = constants(H).beta_H
    w = u / (1 - u)
    L, _ = integrate.quad(
        lambda r: (1 + r) ** (-0.5 - H) * (1 - r / w) ** (1 - 2 * H),
        0, w, weight="alg", wvar=(-0.5 - H, 0), **_QUAD,
    )
    return beta * u ** (0.5 - H) * L


def chi_closed(H: float, u):
    """Vectorised chi via beta_H u^{1-2H} B(1/2-H, 2-2H) 2F1(2-4H, 1/2-H; 5/2-3H; u)."""
    u = np.asarray(u, dtype=float)
    beta = constants(H).beta_H
    out = beta * u ** (1 - 2 * H) * special.beta(0.5 - H, 2 - 2 * H) * special.hyp2f1(
        2 - 4 * H, 0.5 - H, 2.5 - 3 * H, u
    )
    return out


def kappa_tilde(H: float, s: float, t: float) -> float:
    """kappa_tilde(s, t) = |t-s|^{-2H} chi(min/max)."""
    H = _small_H(H, "kappa_tilde")
    s, t = float(s), float(t)
    if s <= 0 or t <= 0:
        raise DomainError("kappa_tilde arguments must be positive")
    if s == t:
        raise SingularityError("kappa_tilde is singular on the diagonal")
    return abs(t - s) ** (-2 * H) * chi(H, min(s, t) / max(s, t))


def kappa_tilde_closed(H: float, s, t):
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(hi > 0, lo / np.where(hi > 0, hi, 1), 0.0)
        return np.abs(t - s) ** (-2 * H) * chi_closed(H, q)


# ---------------------------------------------------------------- rho, rho tilde


def rho_tilde(H: float, s: float, t: float) -> float:
    """rho_tilde(s, t) by quadrature of its tau-integral."""
    H = _small_H(H, "rho_tilde")
    s, t = float(s), float(t)
    if s < 0 or s > t:
        raise DomainError("rho_tilde needs 0 <= s <= t")
    if s == t:
        return 0.0
    beta = constants(H).beta_H
    if s == 0:
        return 0.0
    val, _ = integrate.quad(
        lambda tau: tau ** (H - 0.5), s, t, weight="alg", wvar=(-0.5 - H, 0), **_QUAD
    )
    return math.sqrt(beta) * s ** (0.5 - H) * val


def rho_tilde_closed(H: float, s, t):
    """Vectorised rho_tilde.

    rho_tilde(s, t) = sqrt(beta_H) s^{1/2-H} z^{1/2-H} 2F1(1, 1/2-H; 3/2-H; z)/(1/2-H)
    with z = 1 - s/t, which scales as t^{1/2-H} rho_tilde(s/t, 1).
    """
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    beta = constants(H).beta_H
    a = 0.5 - H
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.clip(1 - s / t, 0.0, 1.0)
        out = math.sqrt(beta) * s**a * z**a * special.hyp2f1(1.0, a, 1.5 - H, z) / a
    return np.where((s <= 0) | (z <= 0), 0.0, out)


def K1(H: float, s, t):
    """K_1(s, t) in closed form (vectorised), any H in (0, 1)."""
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    if H == 0.5:
        return np.ones(s.shape)
    if H > 0.5:
        # 2H(H-1/2) int_s^t r^{H-1/2}(r-s)^{H-3/2} dr, Pfaff-transformed
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.clip(1 - s / t, 0.0, 1.0)
            val = 2 * H * t ** (H - 0.5) * (t - s) ** (H - 0.5) * special.hyp2f1(
                0.5 - H, 1.0, H + 0.5, z
            )
        return np.where(z > 0, val, 0.0)
    x = np.where(t > 0, s / np.where(t > 0, t, 1), 0)
    tail = (
        2 * H * (0.5 - H) * s ** (2 * H - 1) * special.beta(1 - 2 * H, H + 0.5)
        * special.betaincc(1 - 2 * H, H + 0.5, x)
    )
    with np.errstate(divide="ignore"):
        head = 2 * H * t ** (H - 0.5) * (t - s) ** (H - 0.5)
    return head + tail


def rho(H: float, s, t):
    """rho(s, t) = (1/2H) sqrt((2-2H)/lambda_H) s^{1/2-H} K_1(s, t)."""
    H = _check_H(H)
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    if np.any(s < 0) or np.any(s > t):
        raise DomainError("rho needs 0 <= s <= t")
    lam = constants(H).lambda_H
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.sqrt((2 - 2 * H) / lam) * s ** (0.5 - H) * K1(H, s, t) / (2 * H)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- K_f, Q_f


def _check_f(values):
    if not np.all(np.isfinite(values)):
        raise InputError("function values must be finite")


def operator_K(
    f: Callable[[float], float], s: float, t: float, H: float,
    df: Optional[Callable[[float], float]] = None,
) -> float:
    """K_f(s, t) = -2H d/ds int_s^t f(r) r^{H-1/2} (r-s)^{H-1/2} dr.

    For H > 1/2 the derivative moves under the integral. For H < 1/2 the
    integration-by-parts form is used when ``df`` is given; otherwise a
    centred difference with step max(1e-6, 1e-4 s) is taken.
    """
    H = _check_H(H)
    s, t = float(s), float(t)
    if not (0 <= s <= t):
        raise DomainError("operator_K needs 0 <= s <= t")
    _check_f([f(s), f(t)])
    if s == t and H > 0.5:
        return 0.0
    if H == 0.5:
        return float(f(s))
    if H > 0.5:
        val, _ = integrate.quad(
            lambda r: f(r) * r ** (H - 0.5), s, t, weight="alg", wvar=(H - 1.5, 0), **_QUAD
        )
        return 2 * H * (H - 0.5) * val
    if df is not None:
        inner, _ = integrate.quad(
            lambda r: df(r) * r ** (H - 0.5) + (H - 0.5) * f(r) * r ** (H - 1.5),
            s, t, weight="alg", wvar=(H - 0.5, 0), **_QUAD,
        )
        return 2 * H * f(t) * t ** (H - 0.5) * (t - s) ** (H - 0.5) - 2 * H * inner

    def integral(x):
        if x >= t:
            return 0.0
        v, _ = integrate.quad(
            lambda r: f(r) * r ** (H - 0.5), x, t, weight="alg", wvar=(H - 0.5, 0), **_QUAD
        )
        return v

    h = max(1e-6, 1e-4 * s)
    h = min(h, s, (t - s) / 2) if s > 0 else h
    return -2 * H * (integral(s + h) - integral(s - h)) / (2 * h)


def operator_Q(
    f: Callable[[float], float], s: float, H: float,
    df: Optional[Callable[[float], float]] = None,
) -> float:
    """Q_f(s) = d/ds int_0^s f(r) r^{1/2-H} (s-r)^{1/2-H} dr.

    Analytic under the integral for H < 1/2; for H > 1/2 the scaled form
    s^{2-2H} int_0^1 f(sy) (y(1-y))^{1/2-H} dy is differentiated, exactly
    when ``df`` is given and by a centred difference otherwise.
    """
    H = _check_H(H)
    s = float(s)
    if s <= 0:
        raise DomainError("operator_Q needs s > 0")
    _check_f([f(s)])
    if H == 0.5:
        return float(f(s))
    a = 0.5 - H
    if H < 0.5:
        val, _ = integrate.quad(
            lambda r: f(r) * r**a, 0, s, weight="alg", wvar=(0, -0.5 - H), **_QUAD
        )
        return a * val

    def scaled(x, fun):
        v, _ = integrate.quad(lambda y: fun(x * y), 0, 1, weight="alg", wvar=(a, a), **_QUAD)
        return v

    if df is not None:
        first = (2 - 2 * H) * s ** (1 - 2 * H) * scaled(s, f)
        second, _ = integrate.quad(
            lambda y: y * df(s * y), 0, 1, weight="alg", wvar=(a, a), **_QUAD
        )
        return first + s ** (2 - 2 * H) * second
    h = min(max(1e-6, 1e-4 * s), s / 2)
    up = (s + h) ** (2 - 2 * H) * scaled(s + h, f)
    dn = (s - h) ** (2 - 2 * H) * scaled(s - h, f)
    return (up - dn) / (2 * h)


def Q_one(H: float, s):
    """Q_1(s) = (2-2H) B(3/2-H, 3/2-H) s^{1-2H}."""
    return (2 - 2 * H) * special.beta(1.5 - H, 1.5 - H) * np.asarray(s, float) ** (1 - 2 * H)
