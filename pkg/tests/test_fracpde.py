import math
import warnings

import numpy as np
import pytest

from rhtail.errors import EllipticityError, MeanProjectionWarning, ParameterRangeWarning
from rhtail.fracops import apply_symbol, riesz_gradient
from rhtail.fracpde import (Coefficients, PDEProblem, apply_operator, l2_norm, mean_zero,
                            oracle_solve_identity, solution_rh_report, solve)
from rhtail.homspace import PeriodicGrid, make_test_field, random_ball_family

import oracles


def _data(sp, seed=1):
    F = np.stack([make_test_field(sp, "bandlimited", seed=seed + j) for j in range(sp.dim)])
    f = make_test_field(sp, "bandlimited", seed=seed + 10) + 0.3
    return F, f


def _rel(x, y):
    return float(np.linalg.norm(x - y) / np.linalg.norm(y))


def test_identity_coefficients_match_oracle():
    sp = PeriodicGrid(2, 64)
    F, f = _data(sp)
    res = solve(PDEProblem(sp, Coefficients.identity(sp), 0.5, F, f))
    assert res.converged and res.method == "cg"
    assert _rel(res.u, oracle_solve_identity(sp, 0.5, F, f)) <= 1e-8
    assert res.f_mean_removed == pytest.approx(f.mean())


def test_scaled_identity_is_linear():
    sp = PeriodicGrid(2, 32)
    F, f = _data(sp, 4)
    u1 = solve(PDEProblem(sp, Coefficients.identity(sp), 0.4, F, f)).u
    u3 = solve(PDEProblem(sp, Coefficients.identity(sp, 3.0), 0.4, F, f)).u
    assert np.allclose(3 * u3, u1, atol=1e-9)


def test_single_mode_closed_form():
    sp = PeriodicGrid(2, 32, 2 * math.pi)
    x = sp.points.reshape(sp.shape + (2,))
    f = np.cos(x[..., 0])
    a = 0.3
    res = solve(PDEProblem(sp, Coefficients.identity(sp), a, f=f))
    assert np.allclose(res.u, f, atol=1e-9)  # |xi| = 1, so the symbol is 1
    f2 = np.cos(3 * x[..., 1])
    res = solve(PDEProblem(sp, Coefficients.identity(sp), a, f=f2))
    assert np.allclose(res.u, f2 / 3 ** (2 * a), atol=1e-9)


@pytest.fixture(scope="module")
def checker():
    sp = PeriodicGrid(2, 64)
    F, f = _data(sp, 7)
    return sp, Coefficients.checkerboard(sp), F, f


@pytest.mark.parametrize("method", ["cg", "gmres", "richardson"])
def test_checkerboard_methods_converge(checker, method):
    sp, co, F, f = checker
    res = solve(PDEProblem(sp, co, 0.5, F, f, tol=1e-8, method=method))
    assert res.converged and res.residual <= 1e-8 and res.iterations <= 10_000
    ref = solve(PDEProblem(sp, co, 0.5, F, f, tol=1e-12, method="cg")).u
    assert _rel(res.u, ref) < 1e-6


def test_checkerboard_matches_dense_solve():
    sp = PeriodicGrid(2, 16)
    co = Coefficients.checkerboard(sp)
    F, f = _data(sp, 2)
    res = solve(PDEProblem(sp, co, 0.5, F, f, tol=1e-12))
    u_dense, _ = oracles.dense_solve(2, 16, 1.0, co.A, 0.5, F, f)
    assert np.max(np.abs(u_dense.imag)) < 1e-10
    assert _rel(res.u, u_dense.real) <= 1e-6


def test_operator_matches_dense_matrix():
    sp = PeriodicGrid(2, 8)
    rng = np.random.default_rng(0)
    G = rng.standard_normal(sp.shape + (2, 2))
    A = np.einsum("...ij,...kj->...ik", G, G) * 0.2 + np.eye(2)  # symmetric, well inside bounds
    co = Coefficients(A / 3, lam=0.05)
    _, L = oracles.dense_solve(2, 8, 1.0, co.A, 0.7, np.zeros((2, 8, 8)), np.zeros((8, 8)))
    u = rng.standard_normal(sp.shape)
    u -= u.mean()
    got = apply_operator(sp, co, 0.7, u)
    assert np.allclose(got, (L @ u.ravel()).real.reshape(sp.shape), atol=1e-11)


def test_nonhermitian_coefficients_use_gmres():
    sp = PeriodicGrid(2, 16)
    A = np.broadcast_to(np.array([[1.0, 0.6], [-0.6, 1.0]]), sp.shape + (2, 2)).copy()
    co = Coefficients(A, lam=0.7)
    assert not co.hermitian
    F, f = _data(sp, 3)
    res = solve(PDEProblem(sp, co, 0.5, F, f, tol=1e-11))
    assert res.method == "gmres" and res.converged
    u_dense, _ = oracles.dense_solve(2, 16, 1.0, A, 0.5, F, f)
    assert _rel(res.u, u_dense.real) <= 1e-8


def test_weak_form_identity(checker):
    sp, co, _, _ = checker
    rng = np.random.default_rng(2)
    u = make_test_field(sp, "bandlimited", seed=3)
    phi = rng.standard_normal(sp.shape)
    a = 0.5
    lhs = np.sum(apply_operator(sp, co, a, u) * (phi - phi.mean())) * sp.cell_measure
    Du = apply_symbol(sp, u, riesz_gradient(a))
    Dphi = apply_symbol(sp, phi, riesz_gradient(a))
    rhs = np.sum(np.einsum("...ij,j...->i...", co.A, Du) * Dphi) * sp.cell_measure
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_energy_bound(checker):
    sp, co, F, _ = checker
    res = solve(PDEProblem(sp, co, 0.5, F, None))
    Du = apply_symbol(sp, res.u, riesz_gradient(0.5))
    assert l2_norm(sp, np.sqrt(np.sum(Du**2, axis=0))) <= l2_norm(sp, np.sqrt(np.sum(F**2, axis=0))) / co.lam


def test_superposition(checker):
    sp, co, F, f = checker
    uF = solve(PDEProblem(sp, co, 0.5, F, None, tol=1e-12)).u
    uf = solve(PDEProblem(sp, co, 0.5, None, f, tol=1e-12)).u
    u = solve(PDEProblem(sp, co, 0.5, F, f, tol=1e-12)).u
    assert _rel(uF + uf, u) < 1e-9


@pytest.mark.parametrize("kind,tol", [("identity", 0.01), ("checkerboard", 0.05)])
def test_resolution_stability(kind, tol):
    norms = []
    for M in (32, 64):
        sp = PeriodicGrid(2, M, 2 * math.pi)
        x = sp.points.reshape(sp.shape + (2,))
        F = np.stack([np.cos(x[..., 0] + x[..., 1]), np.sin(2 * x[..., 1])])
        f = np.cos(x[..., 0]) * np.sin(x[..., 1])
        co = Coefficients.identity(sp) if kind == "identity" else Coefficients.checkerboard(sp)
        u = solve(PDEProblem(sp, co, 0.5, F, f)).u
        norms.append(l2_norm(sp, u))
    assert abs(norms[1] / norms[0] - 1) < tol


def test_mean_projection():
    sp = PeriodicGrid(2, 16)
    co = Coefficients.identity(sp)
    with pytest.warns(MeanProjectionWarning):
        apply_operator(sp, co, 0.5, np.ones(sp.shape) + make_test_field(sp, "bandlimited"))
    g, m = mean_zero(sp, np.full(sp.shape, 2.0))
    assert m == pytest.approx(2.0) and np.allclose(g, 0)


def test_ellipticity_violation():
    sp = PeriodicGrid(2, 8)
    A = np.broadcast_to(np.diag([1.0, 0.1]), sp.shape + (2, 2)).copy()
    with pytest.raises(EllipticityError):
        Coefficients(A, lam=0.2)
    with pytest.raises(EllipticityError):
        Coefficients.checkerboard(sp, low=0.1, high=5.0, lam=0.2)
    with pytest.raises(ValueError):
        PDEProblem(sp, Coefficients.identity(sp), 1.0)


def test_rh_report_on_checkerboard(checker):
    sp, co, F, f = checker
    prob = PDEProblem(sp, co, 0.5, F, f, tol=1e-8)
    res = solve(prob)
    fam = random_ball_family(sp, 100, seed=0)
    rep = solution_rh_report(res, prob, fam)
    assert len(rep.rows) == 100 and rep.prop_constant > 0
    assert rep.eps_hat is not None and rep.eps_hat > 0
    assert rep.two_star == pytest.approx(2 * 2 / (2 + 1))
    s = rep.summary()
    assert s["eps_hat"] == rep.eps_hat and len(s["curve"]) == 20
    with pytest.warns(ParameterRangeWarning):
        solution_rh_report(res, prob, fam[:5], rho=1.0)


def test_rh_report_zero_data():
    sp = PeriodicGrid(2, 16)
    prob = PDEProblem(sp, Coefficients.identity(sp), 0.5)
    res = solve(prob)
    assert np.all(res.u == 0) and res.iterations == 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = solution_rh_report(res, prob, random_ball_family(sp, 10, seed=1))
    assert rep.prop_constant == 0 and all(r["ratio"] == 0 for r in rep.rows)
