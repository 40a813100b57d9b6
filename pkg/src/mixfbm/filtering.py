"""Path functionals of the fundamental martingale and the two likelihood ratios.

All stochastic integrals are sums of cell-averaged kernels against forward
increments, so every functional of a path is a matrix product with the
increments and is exact at H = 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular, toeplitz

from .errors import DomainError, InputError, InvariantViolation, NumericalError, UnsupportedRegimeError
from .paths import PathSample, fgn_autocov, fgn_cholesky
from .solver import Grid, KernelFamily, TildeFamily

ORACLE_MAX_N = 512


@dataclass(frozen=True)
class FilterOutput:
    """Per-path filtering output; arrays have shape (n_paths, n+1) or (n_paths,)."""

    grid: Grid
    M: np.ndarray
    W: Optional[np.ndarray]
    phi: Optional[np.ndarray]
    log_density: Optional[np.ndarray]
    route: str

    @property
    def density(self) -> Optional[np.ndarray]:
        """exp(log_density) where |log_density| < 30, NaN elsewhere."""
        if self.log_density is None:
            return None
        ld = self.log_density
        return np.where(np.abs(ld) < 30, np.exp(np.clip(ld, -30, 30)), np.nan)


@dataclass(frozen=True)
class OracleWeights:
    grid: Grid
    target_time: float
    weights: np.ndarray

    @property
    def bracket(self) -> float:
        return float(np.sum(self.weights) * self.grid.h)


def _increments(family, path, label="X"):
    if isinstance(path, PathSample):
        if path.grid != family.grid:
            raise InputError("path and kernel family live on different grids")
        if abs(path.H - family.H) > 1e-15:
            raise InputError("path and kernel family have different H")
        x = path[label]
    else:
        x = np.atleast_2d(np.asarray(path, float))
        if x.shape[1] != family.grid.n + 1:
            raise InputError("path length does not match the grid")
    return np.diff(x, axis=1)


def _stieltjes(cells: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """sum_{i<j} cells[j, i] dx[:, i] for every node j."""
    return dx @ np.nan_to_num(cells, nan=0.0).T


def martingale_path(family: KernelFamily, path, label: str = "X") -> np.ndarray:
    """M(t_j) = sum_i g_bar(s_i, t_j) dX_i with cell-averaged g."""
    return _stieltjes(family.g_cell, _increments(family, path, label))


def _bracket_density(family: KernelFamily) -> np.ndarray:
    """sqrt(d<M>/dt) per cell: g(s, s) for H > 1/2, sqrt(1/2) at H = 1/2."""
    if family.H == 0.5:
        return np.full(family.grid.n, np.sqrt(0.5))
    if family.H < 0.5:
        raise DomainError("the innovation route needs H >= 1/2")
    d = family.g_diag
    if np.any(d <= 0):
        raise InvariantViolation("g(t, t) must be positive")
    return 0.5 * (d[1:] + d[:-1])


def innovation_path(family: KernelFamily, M: np.ndarray) -> np.ndarray:
    """W(t_j) = sum_i dM_i / sqrt(d<M>/dt), a Brownian motion."""
    M = np.atleast_2d(M)
    dW = np.diff(M, axis=1) / _bracket_density(family)[None, :]
    return np.hstack([np.zeros((M.shape[0], 1)), np.cumsum(dW, axis=1)])


def _regime_wiener(H: float):
    if not (H == 0.5 or 0.75 < H <= 1.0):
        raise UnsupportedRegimeError(
            f"H={H}: the law of X is equivalent to Wiener measure only for H = 1/2 or "
            "3/4 < H <= 1; for 1/4 <= H <= 3/4 the measures are singular"
        )


def _regime_fbm(H: float):
    if not H < 0.25:
        raise UnsupportedRegimeError(
            f"H={H}: the law of X is equivalent to that of fBm only for H < 1/4; "
            "for H >= 1/4 the measures are singular"
        )


def phi_path(family: KernelFamily, path, label: str = "X") -> np.ndarray:
    """phi_t = int_0^t R(s, t) dX_s at every node."""
    _regime_wiener(family.H)
    if family.R_cell is None:
        raise InputError("kernel family was built without derivatives")
    return _stieltjes(family.R_cell, _increments(family, path, label))


def tilde_transform(tfam: TildeFamily, path, label: str = "X", method: str = "cholesky") -> np.ndarray:
    """X_tilde = int rho_tilde(s, t) dX_s, the causal whitening of B^H applied to X.

    ``cholesky`` (default) applies the discrete innovation transform
    sqrt(h) L^{-1} to the increments, L the Cholesky factor of the fGn
    covariance; it is the grid counterpart of rho_tilde and is exactly white
    under the law of B^H. ``rho`` sums cell averages of rho_tilde against dX,
    whose grid-scale increments carry an O(1) variance error from the
    (t-s)^{1/2-H} cusp; it is kept as a diagnostic.
    """
    dx = _increments(tfam, path, label)
    if method == "rho":
        return _stieltjes(tfam.rho_cell, dx)
    if method != "cholesky":
        raise InputError(f"unknown transform method {method!r}")
    g = tfam.grid
    L = fgn_cholesky(tfam.H, g.n, g.t_end)
    dxt = np.sqrt(g.h) * solve_triangular(L, dx.T, lower=True).T
    return np.hstack([np.zeros((dx.shape[0], 1)), np.cumsum(dxt, axis=1)])


def phi_tilde_path(tfam: TildeFamily, x_tilde: np.ndarray) -> np.ndarray:
    """phi_tilde_t = int_0^t R_tilde(s, t) dX_tilde_s at every node."""
    _regime_fbm(tfam.H)
    return _stieltjes(tfam.R_cell, np.diff(np.atleast_2d(x_tilde), axis=1))


def _girsanov(phi: np.ndarray, dx: np.ndarray, h: float) -> np.ndarray:
    # left-point phi keeps the discrete exponential a martingale
    p = phi[:, :-1]
    return -np.sum(p * dx, axis=1) - 0.5 * h * np.sum(p * p, axis=1)


def rn_density_wiener(family: KernelFamily, path, label: str = "X") -> np.ndarray:
    """log dmu^X/dmu^W evaluated at each path.

    At H = 1/2 the drift phi vanishes and the log density is 0.
    """
    _regime_wiener(family.H)
    dx = _increments(family, path, label)
    if family.H == 0.5:
        return np.zeros(dx.shape[0])
    phi = phi_path(family, path, label)
    return _girsanov(phi, dx, family.grid.h)


def rn_density_fbm(tfam: TildeFamily, path, label: str = "X") -> np.ndarray:
    """log dmu^X/dmu^{B^H} evaluated at each path (H < 1/4)."""
    _regime_fbm(tfam.H)
    xt = tilde_transform(tfam, path, label)
    phi = phi_tilde_path(tfam, xt)
    return _girsanov(phi, np.diff(xt, axis=1), tfam.grid.h)


def filter_paths(family: KernelFamily, path, density: bool = True, label: str = "X") -> FilterOutput:
    """M, W, phi and the Wiener-route log density in one pass."""
    M = martingale_path(family, path, label)
    W = innovation_path(family, M) if family.H >= 0.5 else None
    phi = ld = None
    if density:
        _regime_wiener(family.H)
        ld = rn_density_wiener(family, path, label)
        phi = np.zeros_like(M) if family.H == 0.5 else phi_path(family, path, label)
    return FilterOutput(family.grid, M, W, phi, ld, "wiener")


def reconstruct_X(family: KernelFamily, M: np.ndarray, X: Optional[np.ndarray] = None):
    """X_hat(t_j) = sum_i G_bar(s_i, t_j) dM_i; with X given also max|X_hat - X|."""
    if family.H < 0.5:
        raise DomainError("reconstruction needs H >= 1/2")
    if family.G_cell is None:
        raise InputError("kernel family was built without derivatives")
    M = np.atleast_2d(M)
    xh = _stieltjes(family.G_cell, np.diff(M, axis=1))
    if X is None:
        return xh, None
    X = np.atleast_2d(X)
    return xh, np.max(np.abs(xh - X), axis=1)


def discrete_conditional_oracle(H: float, grid: Grid, j: int) -> OracleWeights:
    """Weights of E(B_t | increments of X up to t = t_j) by normal correlation."""
    if not 0 < j <= grid.n:
        raise DomainError("target must be a positive grid node index")
    if j > ORACLE_MAX_N:
        raise DomainError(f"oracle is limited to {ORACLE_MAX_N} increments")
    h = grid.h
    S = toeplitz(fgn_autocov(H, h, j)) + h * np.eye(j)
    rhs = np.full(j, h)
    try:
        w = cho_solve(cho_factor(S), rhs)
    except np.linalg.LinAlgError:
        try:
            w = cho_solve(cho_factor(S + 1e-12 * np.eye(j)), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("oracle covariance is singular") from exc
    return OracleWeights(grid, float(grid.nodes[j]), w)
