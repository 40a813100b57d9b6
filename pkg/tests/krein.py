"""Krein-type resolvent identities evaluated with Gauss-Jacobi rules."""

import numpy as np
from scipy.special import roots_jacobi

from mixfbm import kernels as kn
from mixfbm import solver as sv


class ResolventTable:
    """Resolvent columns R(., tau) cached by tau."""

    def __init__(self, H, n):
        self.H, self.n = H, n
        self.a = 2 - 2 * H
        self._cols = {}

    def col(self, tau):
        tau = float(tau)
        if tau not in self._cols:
            self._cols[tau] = sv.solve_resolvent("kappa", self.H, tau, self.n)
        return self._cols[tau]

    def R(self, s, t):
        return float(self.col(t)(np.array([s]))[0])


def antisymmetry_residual(tab, s, t, q=24):
    """R(s,t) - R(t,s) against int_s^t R(s,tau) R(t,tau) dtau."""
    if s > t:
        lhs, rhs = antisymmetry_residual(tab, t, s, q)
        return -lhs, -rhs
    a = tab.a
    x, w = roots_jacobi(q, -a, -a)
    tau = s + (t - s) * (x + 1) / 2
    f = np.empty(q)
    for k, tk in enumerate(tau):
        v = tab.col(tk)(np.array([s, t]))
        f[k] = v[0] * v[1] * (tk - s) ** a * (t - tk) ** a
    L = (t - s) / 2
    return tab.R(s, t) - tab.R(t, s), float(np.sum(w * f) * L ** (1 - 2 * a))


def _jacobi_piece(tab, lo, hi, ea, eb, q, s, t):
    """int_lo^hi R(t,r) R(s,r) dr with (r-lo)^ea (hi-r)^eb singular factors."""
    x, w = roots_jacobi(q, eb, ea)  # (1-x)^eb (1+x)^ea
    L = (hi - lo) / 2
    r = lo + L * (x + 1)
    f = np.empty(q)
    for k, rk in enumerate(r):
        v = tab.col(rk)(np.array([t, s]))
        f[k] = v[0] * v[1] * (rk - lo) ** (-ea) * (hi - rk) ** (-eb)
    return float(np.sum(w * f) * L ** (1 + ea + eb))


def product_residual(tab, s, t, q=24):
    """-R(t,s) + int_0^s R(t,r) R(s,r) dr against kappa(t,s).

    For t < s the integrand is also singular at r = t, so the integral is
    split there.
    """
    a = tab.a
    if t < s:
        integ = (_jacobi_piece(tab, 0.0, t, 0.0, -a, q, s, t)
                 + _jacobi_piece(tab, t, s, -a, -a, q, s, t))
    else:
        integ = _jacobi_piece(tab, 0.0, s, 0.0, -a, q, s, t)
    return -tab.R(t, s) + integ, float(kn.kappa(tab.H, t, s))
