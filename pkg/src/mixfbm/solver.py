"""Nystrom product-integration solver for the fundamental kernel family.

Every equation in t is rescaled to the unit interval, where it reads

    y(u) + lam * int_0^1 k(u, v) y(v) dv = rhs(u),   k = |u - v|^{-a} m(u, v),

with one assembled operator per (kernel, H, mesh). The unknown is piecewise
linear on a mesh graded towards both endpoints, and solutions are mapped to
the uniform output grid by interpolation (node values) or exact integration
(cell averages, which the stochastic sums use).

The resolvent R(s, t) blows up like (t - s)^{-a} at s = t. It is solved in the
weighted form w(u) = (1 - u)^a r(u), which stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate
from scipy.linalg import lu_factor, lu_solve

from . import kernels as kn
from .errors import DomainError, InputError, InvariantViolation, SolverError
from .quadrature import (
    graded_mesh,
    pl_cumulative,
    pl_integral,
    product_weights,
    weighted_cumulative,
)

MAX_N = 4096
MIN_N = 8
# unit-mesh panels used when building whole families; accuracy is ~1e-6 here
# and the cost is one dense LU per output column
FAMILY_MESH = 256

TOLERANCES = {
    "mesh_grading": 4.0,
    "quadrature_order": 8,
    "family_mesh_panels": FAMILY_MESH,
}


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [0, t_end] with n panels."""

    n: int
    t_end: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < MIN_N:
            raise DomainError(f"grid needs n >= {MIN_N} panels, got {self.n}")
        if self.n > MAX_N:
            raise DomainError(f"grid size capped at {MAX_N}, got {self.n}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise DomainError(f"horizon must be positive, got {self.t_end}")

    @property
    def h(self) -> float:
        return self.t_end / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n + 1)

    @property
    def unit_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)


# ---------------------------------------------------------------- unit operators

KERNEL_IDS = ("kappa", "kappa_bar_scaled", "kappa_tilde", "zero")


def _kernel_spec(kernel_id: str, H: float):
    """Return (a, m) with k(u, v) = |u-v|^{-a} m(u, v)."""
    if kernel_id == "kappa":
        if not 0.5 < H <= 1:
            raise DomainError("kernel kappa needs 1/2 < H <= 1")
        c = H * (2 * H - 1)
        return 2 - 2 * H, lambda u, v: np.full(np.broadcast(u, v).shape, c)
    if kernel_id == "kappa_bar_scaled":
        if not 0 < H < 0.5:
            raise DomainError("kernel kappa_bar needs H < 1/2")
        beta = kn.constants(H).beta_H
        return 2 * H, lambda u, v: beta * kn.kappa_bar_factor(H, u, v)
    if kernel_id == "kappa_tilde":
        if not 0 < H < 0.5:
            raise DomainError("kernel kappa_tilde needs H < 1/2")

        def m(u, v):
            u, v = np.broadcast_arrays(u, v)
            hi = np.maximum(u, v)
            q = np.where(hi > 0, np.minimum(u, v) / np.where(hi > 0, hi, 1.0), 0.0)
            return kn.chi_closed(H, q)

        return 2 * H, m
    if kernel_id == "zero":
        return 0.0, lambda u, v: np.zeros(np.broadcast(u, v).shape)
    raise InputError(f"unknown kernel id {kernel_id!r}; expected one of {KERNEL_IDS}")


@dataclass(frozen=True)
class UnitOperator:
    kernel_id: str
    H: float
    mesh: np.ndarray
    a: float
    m: Callable
    W: np.ndarray

    @property
    def size(self) -> int:
        return len(self.mesh)


@lru_cache(maxsize=32)
def unit_operator(kernel_id: str, H: float, n: int) -> UnitOperator:
    """Assemble (and cache) the product-integration matrix on the unit mesh."""
    a, m = _kernel_spec(kernel_id, H)
    mesh = graded_mesh(n + (n % 2), TOLERANCES["mesh_grading"])
    W = product_weights(mesh, mesh, a, m, order=TOLERANCES["quadrature_order"])
    W.setflags(write=False)
    return UnitOperator(kernel_id, H, mesh, a, m, W)


@lru_cache(maxsize=32)
def _endpoint_weights(kernel_id: str, H: float, n: int) -> np.ndarray:
    """Weights of k(u, v)(1-v)^{-a} for the weighted resolvent unknown."""
    op = unit_operator(kernel_id, H, n)
    P = product_weights(op.mesh, op.mesh, op.a, op.m, b=op.a, order=TOLERANCES["quadrature_order"])
    P.setflags(write=False)
    return P


def _factor(A: np.ndarray):
    lu = lu_factor(A, check_finite=True)
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-14 * piv.max():
        cond = np.linalg.cond(A, 1)
        raise SolverError(f"singular linear system (condition estimate {cond:.3e})")
    return lu


def _solve(lu, rhs, trans: int = 0):
    y = lu_solve(lu, rhs, trans=trans)
    if not np.all(np.isfinite(y)):
        raise SolverError("non-finite solution")
    return y


# ---------------------------------------------------------------- unit solutions


@dataclass(frozen=True)
class UnitSolution:
    """Piecewise-linear function on a unit mesh."""

    mesh: np.ndarray
    values: np.ndarray

    def __call__(self, u):
        return np.interp(u, self.mesh, self.values)

    def integral(self) -> float:
        return pl_integral(self.mesh, self.values)

    def cumulative(self, points) -> np.ndarray:
        return pl_cumulative(self.mesh, self.values, points)

    def cell_averages(self, k: int) -> np.ndarray:
        """Averages over the k uniform cells of [0, 1]."""
        c = self.cumulative(np.linspace(0, 1, k + 1))
        return np.diff(c) * k


@dataclass(frozen=True)
class SecondKindProblem:
    """eps * y + int_0^1 k(u, v) y(v) dv = rhs(u) on [0, 1]."""

    kernel_id: str
    eps: float
    rhs: Union[Callable[[np.ndarray], np.ndarray], float]
    n: int
    H: float = 0.75


def _rhs_values(rhs, mesh):
    if callable(rhs):
        vals = np.asarray(rhs(mesh), float)
        return np.broadcast_to(vals, mesh.shape).astype(float)
    return np.full(mesh.shape, float(rhs))


def solve_second_kind(problem: SecondKindProblem) -> UnitSolution:
    """Nystrom solve of a unit-interval second-kind equation."""
    if problem.kernel_id not in KERNEL_IDS:
        raise InputError(f"unknown kernel id {problem.kernel_id!r}; expected one of {KERNEL_IDS}")
    if problem.n < MIN_N or problem.n > MAX_N:
        raise DomainError(f"resolution must lie in [{MIN_N}, {MAX_N}]")
    eps = float(problem.eps)
    if eps < 0 or not math.isfinite(eps):
        raise DomainError("eps must be a finite nonnegative number")
    if eps == 0:
        if problem.kernel_id == "kappa" and not callable(problem.rhs):
            mesh = graded_mesh(problem.n + problem.n % 2)
            return UnitSolution(mesh, float(problem.rhs) * g_limit(problem.H)(mesh))
        raise DomainError("eps = 0 is only available for the explicit first-kind solution")
    op = unit_operator(problem.kernel_id, problem.H, problem.n)
    A = eps * np.eye(op.size) + op.W
    y = _solve(_factor(A), _rhs_values(problem.rhs, op.mesh))
    return UnitSolution(op.mesh, y)


# ---------------------------------------------------------------- g(., t)


@dataclass(frozen=True)
class GColumn:
    """g(., t) for one t, stored as unit solution y(u) = g(tu, t)."""

    H: float
    t: float
    unit: Optional[UnitSolution]
    const: Optional[float] = None

    def __call__(self, s):
        s = np.asarray(s, float)
        if self.const is not None:
            return np.full(s.shape, self.const)
        return self.unit(s / self.t)

    @property
    def diag(self) -> float:
        """g(t, t)."""
        if self.const is not None:
            return self.const
        return float(self.unit.values[-1])

    @property
    def bracket(self) -> float:
        """<M>_t = int_0^t g(s, t) ds."""
        if self.const is not None:
            return self.const * self.t
        return self.t * self.unit.integral()

    def cell_averages(self, k: int) -> np.ndarray:
        if self.const is not None:
            return np.full(k, self.const)
        return self.unit.cell_averages(k)

    def node_values(self, k: int) -> np.ndarray:
        return self(np.linspace(0, self.t, k + 1))


def _check_t(t):
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"time must be positive, got {t}")
    return t


def _mesh_n(n: int) -> int:
    if n < MIN_N:
        raise DomainError(f"resolution must be at least {MIN_N}, got {n}")
    if n > MAX_N:
        raise DomainError(f"resolution capped at {MAX_N}, got {n}")
    return n + n % 2


def _g_lam(H, t):
    return t ** (2 * H - 1) if H > 0.5 else t ** (1 - 2 * H)


def _g_system(H: float, t: float, n: int):
    """Matrix and right-hand side of the unit g equation."""
    if H > 0.5:
        op = unit_operator("kappa", H, n)
        lam = t ** (2 * H - 1)
        return op, np.eye(op.size) + lam * op.W, np.ones(op.size)
    op = unit_operator("kappa_bar_scaled", H, n)
    lam = t ** (1 - 2 * H)
    c = kn.constants(H).c_H
    u = op.mesh
    rhs = lam * c * (u * (1 - u)) ** (0.5 - H)
    return op, np.eye(op.size) + lam * op.W, rhs


def solve_g(H: float, t: float, n: int) -> GColumn:
    """Solve for g(., t); closed forms at H = 1/2 and H = 1."""
    H = kn.constants(H).H
    t = _check_t(t)
    n = _mesh_n(n)
    if H == 0.5:
        return GColumn(H, t, None, 0.5)
    if H == 1.0:
        return GColumn(H, t, None, 1.0 / (1.0 + t))
    op, A, rhs = _g_system(H, t, n)
    y = _solve(_factor(A), rhs)
    if H < 0.5:
        y[0] = y[-1] = 0.0
    return GColumn(H, t, UnitSolution(op.mesh, y))


def g_limit(H: float) -> Callable[[np.ndarray], np.ndarray]:
    """Limit of g_eps as eps -> 0.

    H > 1/2: explicit first-kind solution c_H u^{1/2-H}(1-u)^{1/2-H}.
    H < 1/2: the constant 1.
    """
    H = kn.constants(H).H
    if H < 0.5:
        return lambda u: np.ones(np.shape(u))
    if H == 0.5:
        return lambda u: np.ones(np.shape(u))
    if H == 1.0:
        raise DomainError("the first-kind limit needs H < 1")
    c = kn.constants(H).c_H

    def f(u):
        u = np.asarray(u, float)
        with np.errstate(divide="ignore"):
            return c * (u * (1 - u)) ** (0.5 - H)

    return f


def g_limit_integral(H: float) -> float:
    """int_0^1 g_limit = c_H Gamma(3/2-H)^2 / Gamma(3-2H) for H > 1/2."""
    from scipy.special import gamma

    if H <= 0.5:
        return 1.0
    return kn.constants(H).c_H * gamma(1.5 - H) ** 2 / gamma(3 - 2 * H)


def g_limit_square_integral(H: float) -> float:
    """int_0^1 g_limit^2 = c_H^2 B(2-2H, 2-2H) for H > 1/2."""
    from scipy.special import beta

    if H <= 0.5:
        return 1.0
    return kn.constants(H).c_H ** 2 * beta(2 - 2 * H, 2 - 2 * H)


def solve_g_eps(H: float, eps: float, n: int) -> UnitSolution:
    """Solve eps g + K g = phi on [0, 1].

    H > 1/2: kernel kappa, phi = 1. H < 1/2: kernel beta_H kappa_bar,
    phi = c_H (u(1-u))^{1/2-H}. eps = 0 returns the limit on the mesh.
    """
    H = kn.constants(H).H
    n = _mesh_n(n)
    if H > 0.5:
        return solve_second_kind(SecondKindProblem("kappa", eps, 1.0, n, H))
    if H == 0.5:
        raise DomainError("g_eps is defined for H != 1/2")
    c = kn.constants(H).c_H
    if eps == 0:
        mesh = graded_mesh(n)
        return UnitSolution(mesh, np.ones(mesh.shape))
    sol = solve_second_kind(
        SecondKindProblem("kappa_bar_scaled", eps, lambda u: c * (u * (1 - u)) ** (0.5 - H), n, H)
    )
    vals = sol.values.copy()
    vals[0] = vals[-1] = 0.0
    return UnitSolution(sol.mesh, vals)


# ---------------------------------------------------------------- resolvent R(., t)


@dataclass(frozen=True)
class ResolventColumn:
    """R(s, t) = t^{-a} r(s/t) with r(u) = (1-u)^{-a} w(u).

    ``kernel_id`` selects kappa (H > 1/2) or kappa_tilde (H < 1/2).
    """

    kernel_id: str
    H: float
    t: float
    lam: float
    a: float
    mesh: np.ndarray
    w: np.ndarray
    n: int

    def r(self, u):
        u = np.asarray(u, float)
        with np.errstate(divide="ignore"):
            return (1 - u) ** (-self.a) * np.interp(u, self.mesh, self.w)

    def __call__(self, s):
        """R(s, t) for 0 <= s < t, and the extension for s > t."""
        s = np.atleast_1d(np.asarray(s, float))
        u = s / self.t
        out = np.empty(u.shape)
        inside = u < 1
        out[inside] = self.r(u[inside])
        if np.any(~inside):
            out[~inside] = self._extend(u[~inside])
        return self.t ** (-self.a) * out

    def _extend(self, x):
        # r(x) = -k(x, 1) - lam int_0^1 r(v) k(v, x) dv  for x > 1
        op = unit_operator(self.kernel_id, self.H, self.n)
        P = product_weights(x, self.mesh, self.a, op.m, b=self.a)
        kx1 = np.abs(x - 1) ** (-self.a) * op.m(x, np.ones_like(x))
        return -kx1 - self.lam * (P @ self.w)

    def cell_averages(self, k: int) -> np.ndarray:
        """Averages of R(., t) over the k uniform cells of [0, t]."""
        c = weighted_cumulative(self.mesh, self.w, np.linspace(0, 1, k + 1), self.a)
        return np.diff(c) * k * self.t ** (-self.a)

    def integral(self, upto: float = 1.0) -> float:
        """int_0^{upto t} R(s, t) ds for upto <= 1."""
        c = weighted_cumulative(self.mesh, self.w, [upto], self.a)[0]
        return float(c * self.t ** (1 - self.a))

    def phi_variance(self) -> float:
        """-int_0^t R(s, t) k(s, t) ds, the variance of phi_t."""
        op = unit_operator(self.kernel_id, self.H, self.n)
        if 2 * self.a >= 1:
            return math.inf

        def f(u):
            return np.interp(u, self.mesh, self.w) * float(op.m(np.float64(u), np.float64(1.0)))

        val, _ = integrate.quad(f, 0, 1, weight="alg", wvar=(0, -2 * self.a), limit=400,
                                epsabs=1e-13, epsrel=1e-10)
        return float(-val * self.t ** (1 - 2 * self.a))


def _resolvent_system(kernel_id: str, H: float, t: float, n: int):
    op = unit_operator(kernel_id, H, n)
    P = _endpoint_weights(kernel_id, H, n)
    lam = t ** (1 - op.a)
    u = op.mesh
    A = np.eye(op.size) + lam * (1 - u)[:, None] ** op.a * P
    A[-1, :] = 0.0
    A[-1, -1] = 1.0
    rhs = -op.m(u, np.ones_like(u))
    return op, lam, A, rhs


def solve_resolvent(kernel_id: str, H: float, t: float, n: int) -> ResolventColumn:
    """Solve R + int_0^t R(r, t) k(r, s) dr = -k(s, t) in weighted form."""
    t = _check_t(t)
    n = _mesh_n(n)
    if kernel_id == "kappa" and H == 0.5:
        raise DomainError("R is identically zero at H = 1/2")
    op, lam, A, rhs = _resolvent_system(kernel_id, H, t, n)
    w = _solve(_factor(A), rhs)
    return ResolventColumn(kernel_id, H, t, lam, op.a, op.mesh, w, n)


# ---------------------------------------------------------------- families


def _freeze(*arrays):
    for a in arrays:
        if isinstance(a, np.ndarray):
            a.setflags(write=False)


@dataclass(frozen=True)
class KernelFamily:
    """g and its derived fields on a uniform grid.

    Two-dimensional arrays are indexed ``[j, i]`` = value at (s_i, t_j) and
    are NaN outside their domain (i > j, or i = j for the singular fields).
    ``*_cell`` arrays hold averages over [s_i, s_{i+1}] for i < j and drive
    the discretised stochastic integrals.
    """

    H: float
    grid: Grid
    g: np.ndarray
    g_cell: np.ndarray
    g_diag: np.ndarray
    bracket: np.ndarray
    mesh_n: int
    g_dot: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    R_cell: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    G_cell: Optional[np.ndarray] = None
    kernel_id: str = "kappa"
    meta: dict = field(default_factory=dict)

    @property
    def has_derivatives(self) -> bool:
        return self.R is not None

    def column(self, j: int) -> GColumn:
        t = self.grid.nodes[j]
        return solve_g(self.H, t, self.mesh_n) if self.kernel_id != "kappa_tilde" else solve_g_tilde(self.H, t, self.mesh_n)[0]


def _g_value(H, t):
    if H == 0.5:
        return 0.5
    return 1.0 / (1.0 + t)


def solve_g_family(H: float, t_end: float, n: int, derivatives: bool = False,
                   mesh_n: Optional[int] = None) -> KernelFamily:
    """g(., t_j) for every grid node, optionally with g_dot, R and G (H > 1/2)."""
    H = kn.constants(H).H
    grid = Grid(int(n), float(t_end))
    mesh_n = _mesh_n(mesh_n or min(max(n, 64), FAMILY_MESH))
    N = grid.n
    t = grid.nodes
    g = np.full((N + 1, N + 1), np.nan)
    g_cell = np.full((N + 1, N), np.nan)
    diag = np.zeros(N + 1)
    bracket = np.zeros(N + 1)
    closed = H in (0.5, 1.0)
    lus = [None] * (N + 1)
    op = None
    for j in range(N + 1):
        if j == 0:
            g[0, 0] = diag[0] = (0.5 if H == 0.5 else (0.0 if H < 0.5 else 1.0))
            continue
        if closed:
            val = _g_value(H, t[j])
            g[j, : j + 1] = val
            g_cell[j, :j] = val
            diag[j] = val
            bracket[j] = val * t[j]
            continue
        op, A, rhs = _g_system(H, t[j], mesh_n)
        lu = _factor(A)
        y = _solve(lu, rhs)
        if H < 0.5:
            y[0] = y[-1] = 0.0
        sol = UnitSolution(op.mesh, y)
        g[j, : j + 1] = sol(np.linspace(0, 1, j + 1))
        g_cell[j, :j] = sol.cell_averages(j)
        diag[j] = y[-1]
        bracket[j] = t[j] * sol.integral()
        if derivatives and H > 0.5:
            lus[j] = lu
    if H > 0.5 and np.any(diag <= 0):
        raise InvariantViolation("g(t, t) must be positive for H > 1/2")
    fam = dict(H=H, grid=grid, g=g, g_cell=g_cell, g_diag=diag, bracket=bracket,
               mesh_n=mesh_n, kernel_id="kappa" if H >= 0.5 else "kappa_bar_scaled")
    if derivatives:
        if H < 0.5:
            raise DomainError("g_dot, R and G are built for H >= 1/2")
        fam.update(_derivative_fields(H, grid, mesh_n, diag, lus))
    _freeze(*fam.values())
    return KernelFamily(**fam, meta={"tolerances": dict(TOLERANCES), "mesh_n": mesh_n})


def _derivative_fields(H, grid, mesh_n, diag, lus):
    N = grid.n
    t = grid.nodes
    R = np.full((N + 1, N + 1), np.nan)
    R_cell = np.full((N + 1, N), np.nan)
    G = np.full((N + 1, N + 1), np.nan)
    if H == 0.5:
        for j in range(1, N + 1):
            R[j, :j] = 0.0
            R_cell[j, :j] = 0.0
        # normal-correlation definition of G: X = 2M at H = 1/2
        G[np.tril_indices(N + 1)] = 2.0
    else:
        for j in range(1, N + 1):
            col = solve_resolvent("kappa", H, t[j], mesh_n)
            R[j, :j] = col(t[:j])
            R_cell[j, :j] = col.cell_averages(j)
        G = _G_field(H, grid, mesh_n, diag, lus)
    g_dot = diag[:, None] * R
    G_cell = np.full((N + 1, N), np.nan)
    for j in range(1, N + 1):
        G_cell[j, :j] = 0.5 * (G[j, :j] + G[j, 1 : j + 1])
    return dict(g_dot=g_dot, R=R, R_cell=R_cell, G=G, G_cell=G_cell)


def _G_field(H, grid, mesh_n, diag, lus):
    """G(s_i, t_j) = 1 + psi_t(s)/g(s, s).

    psi_t(., s) solves the g equation on [0, s] with right-hand side
    int_0^t kappa(tau, .) d tau; only its value at the endpoint s is needed,
    which one adjoint solve per s delivers for every t >= s at once.
    """
    N = grid.n
    t = grid.nodes
    G = np.full((N + 1, N + 1), np.nan)
    # s = 0: psi = H t^{2H-1}, g(0, 0) = 1
    G[:, 0] = 1.0 + H * t ** (2 * H - 1)
    if H == 1.0:
        for i in range(1, N + 1):
            G[i:, i] = 1.0 + t[i:]
        return G
    op = unit_operator("kappa", H, mesh_n)
    u = op.mesh
    e = np.zeros(op.size)
    e[-1] = 1.0
    base = (1 - u) ** (2 * H - 1)
    for i in range(1, N + 1):
        s = t[i]
        lam = s ** (2 * H - 1)
        z = _solve(lus[i], e, trans=1)
        T = t[i:] / s
        delta = (T[:, None] - u[None, :]) ** (2 * H - 1) - base[None, :]
        G[i:, i] = (1.0 + H * lam * (delta @ z)) / diag[i]
    return G


def solve_g_dot(family: KernelFamily, j: int) -> np.ndarray:
    """g_dot(s_i, t_j) for i < j from the resolvent equation."""
    H = family.H
    if H < 0.5:
        raise DomainError("g_dot is built for H >= 1/2; use solve_g_tilde for H < 1/2")
    if not 0 < j <= family.grid.n:
        raise DomainError("t_j must be a positive grid node")
    gtt = family.g_diag[j]
    if gtt <= 0:
        raise InvariantViolation("g(t, t) must be positive")
    if H == 0.5:
        return np.zeros(j)
    col = solve_resolvent("kappa", H, family.grid.nodes[j], family.mesh_n)
    return gtt * col(family.grid.nodes[:j])


# ---------------------------------------------------------------- tilde family (H < 1/2)


def solve_g_tilde(H: float, t: float, n: int, chi_zero: bool = False):
    """g_tilde(., t) with its resolvent column R_tilde(., t).

    ``chi_zero`` replaces the kernel by zero, a stub for testing.
    """
    H = kn.constants(H).H
    if H >= 0.5:
        raise DomainError("the tilde equation needs H < 1/2")
    t = _check_t(t)
    n = _mesh_n(n)
    kid = "zero" if chi_zero else "kappa_tilde"
    op = unit_operator(kid, H, n)
    lam = t ** (1 - 2 * H)
    y = _solve(_factor(np.eye(op.size) + lam * op.W), np.ones(op.size))
    gcol = GColumn(H, t, UnitSolution(op.mesh, y))
    if chi_zero:
        return gcol, None
    return gcol, solve_resolvent("kappa_tilde", H, t, n)


def solve_p(H: float, t: float, n: int) -> UnitSolution:
    """p(tu, t) / t^{1/2-H} for the bracket identity <M>_t = int_0^t p^2(s, s) ds."""
    H = kn.constants(H).H
    n = _mesh_n(n)
    op = unit_operator("kappa_tilde", H, n)
    lam = t ** (1 - 2 * H)
    k = math.sqrt((2 - 2 * H) / kn.constants(H).lambda_H)
    y = _solve(_factor(np.eye(op.size) + lam * op.W), k * op.mesh ** (0.5 - H))
    return UnitSolution(op.mesh, y)


@dataclass(frozen=True)
class TildeFamily:
    """g_tilde and R_tilde on a uniform grid (H < 1/2), indexed like KernelFamily."""

    H: float
    grid: Grid
    g: np.ndarray
    g_diag: np.ndarray
    bracket: np.ndarray
    R: np.ndarray
    R_cell: np.ndarray
    rho_cell: np.ndarray
    mesh_n: int
    meta: dict = field(default_factory=dict)


def rho_tilde_cells(H: float, grid: Grid, order: int = 16) -> np.ndarray:
    """Cell averages of rho_tilde(., t_j) over [s_i, s_{i+1}], i < j.

    Interior cells use Gauss-Legendre; the first and last cells carry the
    (s - 0)^{1/2-H} and (t - s)^{1/2-H} cusps and use matching Gauss-Jacobi.
    """
    from scipy.special import roots_jacobi, roots_legendre

    N = grid.n
    t = grid.nodes
    h = grid.h
    e = 0.5 - H
    xg, wg = roots_legendre(order)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg
    xj, wj = roots_jacobi(order, e, 0.0)  # weight (1-x)^e: right-end cusp
    xj = 0.5 * (xj + 1)
    wj = wj * 0.5 ** (1 + e)
    out = np.full((N + 1, N), np.nan)
    for j in range(1, N + 1):
        s = t[:j, None] + h * xg[None, :]
        out[j, :j] = kn.rho_tilde_closed(H, s, t[j]) @ wg
        # last cell: f = (1-x)^e * f/(1-x)^e
        sl = t[j - 1] + h * xj
        out[j, j - 1] = (kn.rho_tilde_closed(H, sl, t[j]) / (1 - xj) ** e) @ wj
        if j > 1:
            s0 = h * (1 - xj)  # mirrored: cusp at s = 0
            out[j, 0] = (kn.rho_tilde_closed(H, s0, t[j]) / (1 - xj) ** e) @ wj
    return out


def solve_tilde_family(H: float, t_end: float, n: int, mesh_n: Optional[int] = None) -> TildeFamily:
    """g_tilde, R_tilde and the rho_tilde transform on a uniform grid."""
    H = kn.constants(H).H
    if H >= 0.5:
        raise DomainError("the tilde family needs H < 1/2")
    grid = Grid(int(n), float(t_end))
    mesh_n = _mesh_n(mesh_n or min(max(n, 64), FAMILY_MESH))
    N = grid.n
    t = grid.nodes
    g = np.full((N + 1, N + 1), np.nan)
    diag = np.zeros(N + 1)
    bracket = np.zeros(N + 1)
    R = np.full((N + 1, N + 1), np.nan)
    R_cell = np.full((N + 1, N), np.nan)
    g[0, 0] = diag[0] = 1.0
    for j in range(1, N + 1):
        gcol, rcol = solve_g_tilde(H, t[j], mesh_n)
        g[j, : j + 1] = gcol.node_values(j)
        diag[j] = gcol.diag
        bracket[j] = gcol.bracket
        R[j, :j] = rcol(t[:j])
        R_cell[j, :j] = rcol.cell_averages(j)
    if np.any(diag <= 0):
        raise InvariantViolation("g_tilde(t, t) must be positive")
    rho_cell = rho_tilde_cells(H, grid)
    _freeze(g, diag, bracket, R, R_cell, rho_cell)
    return TildeFamily(H, grid, g, diag, bracket, R, R_cell, rho_cell, mesh_n,
                       meta={"tolerances": dict(TOLERANCES), "mesh_n": mesh_n})
