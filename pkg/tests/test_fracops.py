import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhtail.fracops import (apply_symbol, calibrated_constant, closed_form_constant,
                            frac_laplacian, frac_laplacian_quadrature, gradient, identity_suite,
                            kernel_modes, load_field_raw, nyquist_free, riesz_adjoint,
                            riesz_gradient, riesz_gradient_adjoint, riesz_potential,
                            riesz_transform, save_field_raw)
from rhtail.homspace import PeriodicGrid, PointCloud, make_test_field

import oracles


def test_identity_suite_defects():
    d = identity_suite(seed=0)
    assert d["RstarR_sign"] == 1
    for key in ("D_vs_R_fraclap", "D_vs_grad_potential", "RstarR", "adjoint", "plancherel",
                "realness", "constant"):
        assert d[key] <= 1e-10, key
    assert d["RstarR_minus"] > 1.0


@pytest.mark.parametrize("dim,cells", [(1, 16), (2, 8), (1, 15)])
@pytest.mark.parametrize("a", [0.3, 0.8])
def test_gradient_matches_dense_assembly(dim, cells, a):
    sp = PeriodicGrid(dim, cells, 3.0)
    u = np.random.default_rng(1).standard_normal(sp.shape)
    Dense = oracles.dense_fractional_gradient(dim, cells, 3.0, a)
    got = apply_symbol(sp, u, riesz_gradient(a))
    for j in range(dim):
        want = (Dense[j] @ u.ravel()).reshape(sp.shape)
        assert np.max(np.abs(want.imag)) < 1e-12
        assert np.allclose(got[j], want.real, atol=1e-12)


def test_single_mode_values():
    sp = PeriodicGrid(2, 32, 2 * math.pi)
    x = sp.points.reshape(sp.shape + (2,))
    u = np.cos(2 * x[..., 0] + x[..., 1])
    r = math.sqrt(5)
    assert np.allclose(apply_symbol(sp, u, frac_laplacian(0.6)), r**0.6 * u, atol=1e-12)
    assert np.allclose(apply_symbol(sp, u, riesz_potential(0.5)), r**-0.5 * u, atol=1e-12)
    s = np.sin(2 * x[..., 0] + x[..., 1])
    g = apply_symbol(sp, u, gradient())
    assert np.allclose(g[0], -2 * s, atol=1e-11) and np.allclose(g[1], -s, atol=1e-11)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 1.0))
@settings(max_examples=20, deadline=None)
def test_adjoint_pairing(seed, a):
    sp = PeriodicGrid(2, 16)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(sp.shape)
    V = rng.standard_normal((2,) + sp.shape)
    lhs = np.sum(apply_symbol(sp, u, riesz_gradient(a)) * V)
    rhs = np.sum(u * apply_symbol(sp, V, riesz_gradient_adjoint(a)))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_real_fields_stay_real_with_nyquist():
    sp = PeriodicGrid(2, 16)
    u = np.random.default_rng(2).standard_normal(sp.shape)  # full spectrum, Nyquist included
    for sym in (riesz_gradient(0.5), riesz_transform(), gradient()):
        out = apply_symbol(sp, u, sym, return_complex=True)
        assert np.max(np.abs(out.imag)) < 1e-12
    keep = nyquist_free(sp)
    assert not keep[0][8, 3] and keep[1][8, 3]
    ker = kernel_modes(sp)
    assert ker[0, 0] and ker[8, 8] and ker[0, 8] and not ker[1, 8]
    assert np.count_nonzero(ker) == 4


def test_riesz_square_identity_and_contraction():
    sp = PeriodicGrid(2, 16)
    u = np.random.default_rng(5).standard_normal(sp.shape)
    RsR = lambda v: apply_symbol(sp, apply_symbol(sp, v, riesz_transform()), riesz_adjoint())
    assert np.linalg.norm(RsR(u)) < np.linalg.norm(u - u.mean())
    uh = np.fft.fftn(u)
    uh[8, :] = uh[:, 8] = uh[0, 0] = 0  # drop the mean and every mode with a Nyquist component
    u = np.fft.ifftn(uh).real
    assert np.allclose(RsR(u), u, atol=1e-12)


def test_symbol_validation():
    sp = PeriodicGrid(2, 8)
    with pytest.raises(ValueError):
        apply_symbol(sp, np.zeros((8, 8)), riesz_adjoint())
    with pytest.raises(ValueError):
        riesz_gradient(1.5)
    with pytest.raises(ValueError):
        riesz_potential(2.0, dim=2)
    with pytest.raises(ValueError):
        frac_laplacian(0.0)
    with pytest.raises(TypeError):
        apply_symbol(PointCloud(points=np.zeros((3, 1)) + [[0], [1], [2]]), np.zeros(3),
                     frac_laplacian(0.5))


def test_calibrated_constant_near_closed_form():
    for dim in (1, 2):
        for a in (0.3, 0.5, 1.2):
            c = calibrated_constant(dim, a)
            assert c == pytest.approx(closed_form_constant(dim, a), rel=0.05)


def test_quadrature_matches_spectral():
    sp = PeriodicGrid(1, 256, 2 * math.pi)
    u = make_test_field(sp, "bandlimited", seed=7, kmax=8)
    spec = apply_symbol(sp, u, frac_laplacian(0.5))
    rng = np.random.default_rng(0)
    for i in rng.choice(256, 10, replace=False):
        q = frac_laplacian_quadrature(sp, u, int(i), 0.5)
        assert abs(q - spec[i]) <= 0.05 * abs(spec[i])


def test_quadrature_validation():
    with pytest.raises(ValueError):
        frac_laplacian_quadrature(PeriodicGrid(3, 4), np.zeros((4, 4, 4)), 0, 0.5)
    with pytest.raises(ValueError):
        frac_laplacian_quadrature(PeriodicGrid(1, 8), np.zeros(8), 0, 2.0)


@pytest.mark.parametrize("cplx", [False, True])
def test_raw_round_trip(tmp_path, cplx):
    sp = PeriodicGrid(2, 8)
    u = np.random.default_rng(3).standard_normal((2,) + sp.shape)
    if cplx:
        u = u + 1j * u[::-1]
    save_field_raw(tmp_path / "u.f8", sp, u)
    assert (tmp_path / "u.f8").stat().st_size == u.size * (16 if cplx else 8)
    back, meta = load_field_raw(tmp_path / "u.f8")
    assert np.array_equal(back, u) and meta["layout"] == "row-major" and meta["cells"] == 8
