"""Graded meshes and product-integration weights for weakly singular kernels.

The unknowns of every integral equation are piecewise linear on a mesh of
[0, 1] that is graded towards both endpoints, where solutions have power-type
cusps. Weights integrate |x - v|^{-a} (1 - v)^{-b} m(x, v) against the hat
functions: Gauss-Legendre on well separated panels, Gauss-Jacobi with the
singular point as an endpoint on nearby panels, and adaptive QUADPACK where
both singular points meet on the same panel.
"""

from __future__ import annotations

import warnings
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi, roots_legendre

SmoothFactor = Callable[[np.ndarray, np.ndarray], np.ndarray]

# smallest panel allowed next to an endpoint; nodes closer to 1 than this lose
# too many digits in double precision
_MIN_PANEL = 1e-12


def graded_mesh(n: int, grading: float = 4.0) -> np.ndarray:
    """Symmetric mesh of [0, 1] with n panels graded towards 0 and 1.

    Left half nodes are 0.5 (2k/n)^q. The exponent q is lowered when needed so
    the end panels stay above ``_MIN_PANEL``.
    """
    n = int(n)
    if n < 2 or n % 2:
        raise ValueError("mesh size must be even and >= 2")
    half = n // 2
    q = float(grading)
    if half > 1:
        q = min(q, np.log(2 * _MIN_PANEL) / np.log(1.0 / half))
    q = max(q, 1.0)
    k = np.arange(half + 1) / half
    left = 0.5 * k**q
    return np.concatenate([left, 1.0 - left[-2::-1]])


@lru_cache(maxsize=None)
def _legendre(order: int):
    t, w = roots_legendre(order)
    return 0.5 * (t + 1), 0.5 * w


@lru_cache(maxsize=None)
def _jacobi_left(order: int, a: float):
    """Nodes/weights on [0, 1] for weight tau^{-a}."""
    t, w = roots_jacobi(order, 0.0, -a)
    return 0.5 * (t + 1), w * 0.5 ** (1 - a)


def _seg(x, end, a, smooth, lo, hi, order):
    """Integral over v between x and end of |x-v|^{-a} smooth(v) hat(v).

    Returns the coefficients of the left and right hats of panel [lo, hi].
    """
    L = abs(end - x)
    if L == 0:
        return 0.0, 0.0
    tj, wj = _jacobi_left(order, a)
    v = x + np.sign(end - x) * L * tj
    f = smooth(v) * wj * L ** (1 - a)
    tau = (v - lo) / (hi - lo)
    return float(np.sum(f * (1 - tau))), float(np.sum(f * tau))


def _near(x, lo, hi, a, smooth, order):
    """Panel integral with the singular point x on or near the panel."""
    if lo < x < hi:
        l1, r1 = _seg(x, lo, a, smooth, lo, hi, order)
        l2, r2 = _seg(x, hi, a, smooth, lo, hi, order)
        return l1 + l2, r1 + r2
    far, near = (hi, lo) if x <= lo else (lo, hi)
    lf, rf = _seg(x, far, a, smooth, lo, hi, order)
    if x == near:
        return lf, rf
    ln, rn = _seg(x, near, a, smooth, lo, hi, order)
    return lf - ln, rf - rn


def _both(x, lo, hi, a, b, m):
    """Adaptive quadrature when x and the endpoint 1 both touch the panel."""
    cuts = [lo, hi] if not (lo < x < hi) else [lo, x, hi]
    out = np.zeros(2)
    for p, q in zip(cuts[:-1], cuts[1:]):
        ea = -a if p == x else 0.0
        eb = (-a if q == x else 0.0) + (-b if q == 1.0 else 0.0)
        if eb <= -1.0:
            return np.array([np.nan, np.nan])

        def core(v, _p=p, _q=q):
            f = m(np.float64(x), np.float64(v))
            if _p != x and _q != x:
                f = f * abs(x - v) ** (-a)
            if _q != 1.0:
                f = f * (1 - v) ** (-b)
            return float(f)

        for j, hat in enumerate((lambda v: (hi - v) / (hi - lo), lambda v: (v - lo) / (hi - lo))):
            # tight tolerances trip roundoff warnings near v = 1; the values hold
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, _ = integrate.quad(
                    lambda v: core(v) * hat(v), p, q, weight="alg", wvar=(ea, eb),
                    epsabs=1e-14, epsrel=1e-11, limit=200,
                )
            out[j] += val
    return out


def product_weights(
    x_eval: np.ndarray,
    nodes: np.ndarray,
    a: float,
    m: SmoothFactor,
    b: float = 0.0,
    order: int = 8,
) -> np.ndarray:
    """W[i, j] = int_0^1 |x_i - v|^{-a} (1-v)^{-b} m(x_i, v) hat_j(v) dv.

    ``m`` must broadcast over array arguments. Rows where the integral
    diverges (x_i = 1 with a + b >= 1) are returned as NaN.
    """
    x_eval = np.asarray(x_eval, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    N = len(nodes) - 1
    h = np.diff(nodes)
    tg, wg = _legendre(order)
    V = nodes[:-1, None] + h[:, None] * tg[None, :]
    X = x_eval[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.abs(X - V[None]) ** (-a) * m(X, V[None]) * (wg * h[:, None])[None]
        if b:
            F = F * (1 - V[None]) ** (-b)
    W = np.zeros((len(x_eval), N + 1))
    W[:, :-1] += F @ (1 - tg)
    W[:, 1:] += F @ tg

    dist = np.maximum(nodes[:-1][None] - x_eval[:, None], x_eval[:, None] - nodes[1:][None])
    near_x = dist < h[None] if a else np.zeros(dist.shape, bool)
    near_1 = (1.0 - nodes[1:]) < h if b else np.zeros(N, bool)
    for i, k in zip(*np.nonzero(near_x | near_1[None])):
        x = x_eval[i]
        lo, hi = nodes[k], nodes[k + 1]
        W[i, k] -= F[i, k] @ (1 - tg)
        W[i, k + 1] -= F[i, k] @ tg
        if near_x[i, k] and near_1[k]:
            cl, cr = _both(x, lo, hi, a, b, m)
        elif near_x[i, k]:
            if b:
                sm = lambda v, x=x: m(x, v) * (1 - v) ** (-b)
            else:
                sm = lambda v, x=x: m(x, v)
            cl, cr = _near(x, lo, hi, a, sm, order)
        else:
            sm = lambda v, x=x: np.abs(x - v) ** (-a) * m(x, v)
            cl, cr = _near(1.0, lo, hi, b, sm, order)
        W[i, k] += cl
        W[i, k + 1] += cr
    W[np.isnan(W).any(axis=1)] = np.nan
    return W


# ---------------------------------------------------------------- piecewise linear calculus


def pl_integral(nodes: np.ndarray, y: np.ndarray) -> float:
    """Exact integral of the piecewise-linear interpolant."""
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(nodes)))


def pl_cumulative(nodes: np.ndarray, y: np.ndarray, points) -> np.ndarray:
    """int_0^p of the piecewise-linear interpolant at each point p in [0, 1]."""
    nodes = np.asarray(nodes, float)
    y = np.asarray(y, float)
    points = np.clip(np.asarray(points, float), nodes[0], nodes[-1])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(nodes))])
    j = np.clip(np.searchsorted(nodes, points, side="right") - 1, 0, len(nodes) - 2)
    dx = points - nodes[j]
    slope = (y[j + 1] - y[j]) / (nodes[j + 1] - nodes[j])
    return cum[j] + y[j] * dx + 0.5 * slope * dx * dx


def _pow_diff(e_lo, e_hi, c):
    """e_lo^c - e_hi^c for 0 <= e_hi <= e_lo without cancellation."""
    e_lo = np.asarray(e_lo, float)
    e_hi = np.asarray(e_hi, float)
    out = e_lo**c - e_hi**c
    ok = e_hi > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = e_hi**c * np.expm1(c * np.log1p((e_lo - e_hi) / np.where(ok, e_hi, 1.0)))
    return np.where(ok, alt, out)


def weighted_cumulative(nodes: np.ndarray, w: np.ndarray, points, b: float) -> np.ndarray:
    """int_0^p (1-v)^{-b} w(v) dv for piecewise-linear w, exactly, b < 1."""
    nodes = np.asarray(nodes, float)
    w = np.asarray(w, float)
    points = np.clip(np.asarray(points, float), nodes[0], nodes[-1])

    def piece(p, q, j):
        # w = alpha + beta (1 - v) on panel j
        beta = -(w[j + 1] - w[j]) / (nodes[j + 1] - nodes[j])
        alpha = w[j] - beta * (1 - nodes[j])
        ep, eq = 1 - p, 1 - q
        return alpha * _pow_diff(ep, eq, 1 - b) / (1 - b) + beta * _pow_diff(ep, eq, 2 - b) / (2 - b)

    J = np.arange(len(nodes) - 1)
    cum = np.concatenate([[0.0], np.cumsum(piece(nodes[:-1], nodes[1:], J))])
    j = np.clip(np.searchsorted(nodes, points, side="right") - 1, 0, len(nodes) - 2)
    return cum[j] + piece(nodes[j], points, j)
