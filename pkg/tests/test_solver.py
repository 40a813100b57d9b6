import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_legendre

from mixfbm import solver as sv
from mixfbm.errors import DomainError, InputError, SolverError


# ---------------------------------------------------------------- grid


def test_grid_properties():
    g = sv.Grid(16, 2.0)
    assert g.h == 0.125
    assert g.nodes[0] == 0 and g.nodes[-1] == 2.0
    assert np.all(np.diff(g.nodes) > 0)
    assert g.unit_nodes[-1] == 1.0


@pytest.mark.parametrize("n,t", [(4, 1.0), (7, 1.0), (5000, 1.0), (16, 0.0), (16, -1.0), (16, float("inf"))])
def test_grid_rejects(n, t):
    with pytest.raises(DomainError):
        sv.Grid(n, t)


# ---------------------------------------------------------------- closed forms


@pytest.mark.parametrize("n", [8, 64, 512])
def test_brownian_case(n):
    col = sv.solve_g(0.5, 2.0, n)
    assert np.all(col.node_values(n) == 0.5)
    assert col.bracket == pytest.approx(1.0, abs=1e-12)


def test_H_one_case():
    col = sv.solve_g(1.0, 1.0, 64)
    assert np.max(np.abs(col.node_values(64) - 0.5)) <= 1e-12
    assert sv.solve_g(1.0, 3.0, 64).diag == pytest.approx(0.25)


def test_family_brownian_bracket():
    fam = sv.solve_g_family(0.5, 1.0, 32)
    assert np.allclose(fam.bracket, fam.grid.nodes / 2, atol=1e-14)
    assert np.all(fam.g[np.tril_indices(33)] == 0.5)


def test_solve_g_domain():
    with pytest.raises(DomainError):
        sv.solve_g(0.7, 0.0, 64)
    with pytest.raises(DomainError):
        sv.solve_g(0.7, 1.0, 4)


# ---------------------------------------------------------------- H > 1/2


def test_symmetry_and_refinement():
    col = sv.solve_g(0.75, 1.0, 512)
    assert col(0.0) == pytest.approx(col(1.0), rel=1e-12)
    vals = [sv.solve_g(0.75, 1.0, n)(0.37) for n in (256, 512, 1024)]
    # Richardson with the observed rate
    r = (vals[1] - vals[0]) / (vals[2] - vals[1])
    extrap = vals[2] + (vals[2] - vals[1]) / (r - 1)
    assert float(vals[1]) == pytest.approx(float(extrap), rel=5e-4)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_grid_convergence(H):
    errs = []
    for n in (128, 256, 512):
        a = sv.solve_g(H, 1.0, n).unit
        b = sv.solve_g(H, 1.0, 2 * n).unit
        assert np.allclose(a.mesh, b.mesh[::2])
        errs.append(np.max(np.abs(a.values - b.values[::2])))
    assert errs[0] / errs[1] >= 1.5 and errs[1] / errs[2] >= 1.5


def test_diagonal_near_zero():
    assert abs(sv.solve_g(0.7, 1e-3, 256).diag - 1) <= 0.05


@pytest.mark.parametrize("H", np.round(np.arange(0.55, 1.0, 0.1), 2))
def test_diagonal_positive(H):
    fam = sv.solve_g_family(H, 1.0, 16)
    assert np.all(fam.g_diag > 0)


def test_family_invariants():
    fam = sv.solve_g_family(0.7, 2.0, 32)
    assert np.all(np.diff(fam.bracket) >= 0)
    assert fam.bracket[0] == 0
    j = 32
    row = fam.g[j, : j + 1]
    assert np.allclose(row, row[::-1], rtol=1e-10)
    # cell averages integrate to the bracket
    assert np.sum(fam.g_cell[j, :j]) * fam.grid.h == pytest.approx(fam.bracket[j], rel=1e-12)
    assert np.isnan(fam.g[0, 1])
    assert not fam.g.flags.writeable


def test_g_dot_matches_time_difference():
    fam = sv.solve_g_family(0.7, 1.0, 64, derivatives=True)
    s = fam.grid.nodes[19]
    d = 1e-4
    # the difference quotient needs a fine mesh to resolve the t-dependence
    fd = (sv.solve_g(0.7, 1 + d, 1024)(s) - sv.solve_g(0.7, 1 - d, 1024)(s)) / (2 * d)
    assert sv.solve_g_dot(fam, 64)[19] == pytest.approx(float(fd), rel=1e-3)
    assert fam.g_dot[64, 19] == pytest.approx(sv.solve_g_dot(fam, 64)[19])


def test_G_identities():
    H = 0.7
    fam = sv.solve_g_family(H, 1.0, 32, derivatives=True)
    t = fam.grid.nodes
    assert np.allclose(fam.G[:, 0], 1 + H * t ** (2 * H - 1))
    d = np.diag(fam.G)[1:] * fam.g_diag[1:]
    assert np.allclose(d, 1.0, atol=1e-8)


def test_G_H_one_and_half():
    fam = sv.solve_g_family(1.0, 1.0, 16, derivatives=True)
    t = fam.grid.nodes
    for i in range(17):
        assert np.allclose(fam.G[i:, i], 1 + t[i:])
    fam = sv.solve_g_family(0.5, 1.0, 16, derivatives=True)
    assert np.all(fam.G[np.tril_indices(17)] == 2.0)
    assert np.all(fam.R_cell[np.tril_indices(17, -1)] == 0.0)


def test_G_against_resolvent_integral():
    # G(s, t) = 1 - int_0^t R(r, s) dr / g(s, s), the r > s part from the extension
    H, n = 0.7, 64
    fam = sv.solve_g_family(H, 1.0, n, derivatives=True)
    i = 32
    s = fam.grid.nodes[i]
    col = sv.solve_resolvent("kappa", H, s, 256)
    from scipy.special import roots_jacobi

    a = 2 - 2 * H
    x, w = roots_jacobi(40, 0.0, -a)
    tau = s + (1 - s) * (x + 1) / 2
    ext = np.sum(w * col(tau) * (tau - s) ** a) * ((1 - s) / 2) ** (1 - a)
    G = 1 - (col.integral() + ext) / fam.g_diag[i]
    assert fam.G[-1, i] == pytest.approx(G, rel=2e-3)


def test_derivatives_need_H_half_or_more():
    with pytest.raises(DomainError):
        sv.solve_g_family(0.3, 1.0, 16, derivatives=True)


def test_resolvent_rejects_brownian():
    with pytest.raises(DomainError):
        sv.solve_resolvent("kappa", 0.5, 1.0, 64)


def test_phi_variance_positive():
    col = sv.solve_resolvent("kappa", 0.85, 1.0, 256)
    v = col.phi_variance()
    assert 0 < v < np.inf
    assert sv.solve_resolvent("kappa", 0.7, 1.0, 64).phi_variance() == np.inf


# ---------------------------------------------------------------- H < 1/2


def test_small_H_diagonal_zero():
    fam = sv.solve_g_family(0.3, 1.0, 16)
    assert np.all(fam.g_diag == 0)
    assert np.all(np.diff(fam.bracket) >= 0)


def test_small_H_bracket_via_p():
    H, t = 0.3, 1.0
    x, w = roots_legendre(40)
    x, w = (x + 1) / 2 * t, w / 2 * t
    p = np.array([s ** (0.5 - H) * sv.solve_p(H, s, 256).values[-1] for s in x])
    assert np.sum(w * p**2) == pytest.approx(sv.solve_g(H, t, 256).bracket, rel=1e-4)


def test_tilde_stub():
    g, r = sv.solve_g_tilde(0.3, 1.0, 32, chi_zero=True)
    assert r is None
    assert np.allclose(g.unit.values, 1.0)


def test_tilde_domain():
    with pytest.raises(DomainError):
        sv.solve_g_tilde(0.6, 1.0, 32)
    with pytest.raises(DomainError):
        sv.solve_tilde_family(0.5, 1.0, 16)


def test_tilde_family_fields():
    tf = sv.solve_tilde_family(0.2, 1.0, 16)
    assert np.all(tf.g_diag > 0)
    assert np.all(np.isfinite(tf.R_cell[np.tril_indices(17, -1)]))
    assert np.all(np.isfinite(tf.rho_cell[np.tril_indices(17, -1)]))


# ---------------------------------------------------------------- eps family


def test_limit_integrals():
    from mixfbm import kernels as kn

    for H in (0.6, 0.75, 0.9):
        assert 1 / sv.g_limit_integral(H) == pytest.approx(kn.constants(H).lambda_H, rel=1e-12)
    u = np.linspace(0.01, 0.99, 5)
    assert np.all(sv.g_limit(0.3)(u) == 1.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 0.3))
def test_eps_bound(eps):
    H = 0.8
    g = sv.solve_g_eps(H, eps, 256)
    assert abs(g.integral() - sv.g_limit_integral(H)) <= 2 * eps * sv.g_limit_square_integral(H)


def test_eps_zero_returns_limit():
    g = sv.solve_g_eps(0.7, 0.0, 64)
    assert g.values[32] == pytest.approx(float(sv.g_limit(0.7)(g.mesh[32])))


def test_second_kind_errors():
    with pytest.raises(InputError):
        sv.solve_second_kind(sv.SecondKindProblem("nope", 1.0, 1.0, 32))
    with pytest.raises(DomainError):
        sv.solve_second_kind(sv.SecondKindProblem("kappa", -1.0, 1.0, 32))
    with pytest.raises(DomainError):
        sv.solve_second_kind(sv.SecondKindProblem("zero", 0.0, 1.0, 32))


def test_singular_system_reports_condition():
    A = np.ones((4, 4))
    with pytest.warns(Warning), pytest.raises(SolverError, match="condition"):
        sv._factor(A)


def test_second_kind_zero_kernel():
    sol = sv.solve_second_kind(sv.SecondKindProblem("zero", 2.0, 1.0, 16))
    assert np.allclose(sol.values, 0.5)
