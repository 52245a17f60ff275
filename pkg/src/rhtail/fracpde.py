"""Periodic nonlocal elliptic equations in fractional-gradient form.

Solves ``(D^a)* (A D^a u) = (D^a)* F + f`` for mean-zero ``u`` on a periodic
grid, where ``A`` is a bounded elliptic matrix field (possibly complex),
``F`` a vector field and ``f`` a scalar field whose mean is removed.  The
operator is applied spectrally; the solver iterates on the operator
preconditioned by the exact inverse of the ``A = I`` operator (see
:func:`identity_symbol`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import EllipticityError, MeanProjectionWarning, ParameterRangeWarning
from .fracops import (apply_symbol, frac_laplacian, frequencies, kernel_modes, nyquist_free,
                      riesz_gradient, riesz_gradient_adjoint)
from .gehring import RHInstance, RHReport, _group, _ratio, describe_family, estimate_gain
from .homspace import Ball, PeriodicGrid, RadialAverager
from .tails import TailWeights, tail_from_averager


@dataclass
class Coefficients:
    """Matrix field ``A`` of shape ``(*grid, dim, dim)`` with ellipticity ``lam``.

    Requires ``lam |xi|^2 <= Re(A xi . conj(xi))`` and
    ``Re(A xi . conj(xi)) <= |xi|^2 / lam`` at every grid point for all
    complex ``xi``; this is checked exactly through the Hermitian part and
    additionally on seeded random unit vectors.
    """

    A: np.ndarray
    lam: float
    seed: int = 0
    n_probe: int = 32

    def __post_init__(self):
        self.A = np.asarray(self.A)
        n = self.A.shape[-1]
        if self.A.shape[-2:] != (n, n):
            raise ValueError("coefficient field must end with a square matrix axis")
        if not 0 < self.lam <= 1:
            raise ValueError("ellipticity constant must lie in (0, 1]")
        H = 0.5 * (self.A + np.conj(np.swapaxes(self.A, -1, -2)))
        ev = np.linalg.eigvalsh(H.reshape(-1, n, n))
        tol = 1e-12
        lo, hi = float(ev.min()), float(ev.max())
        if lo < self.lam - tol or hi > 1 / self.lam + tol:
            raise EllipticityError(f"Hermitian part spectrum [{lo}, {hi}] outside "
                                   f"[{self.lam}, {1 / self.lam}]")
        rng = np.random.default_rng(self.seed)
        z = rng.standard_normal((self.n_probe, n)) + 1j * rng.standard_normal((self.n_probe, n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        flat = self.A.reshape(-1, n, n)
        form = np.real(np.einsum("pi,gij,pj->gp", np.conj(z), flat, z))
        if form.min() < self.lam - tol or form.max() > 1 / self.lam + tol:
            raise EllipticityError("sampled quadratic form outside the ellipticity bounds")

    @property
    def hermitian(self) -> bool:
        return bool(np.allclose(self.A, np.conj(np.swapaxes(self.A, -1, -2)), rtol=0, atol=1e-14))

    @classmethod
    def identity(cls, space: PeriodicGrid, scale: float = 1.0) -> "Coefficients":
        A = np.broadcast_to(scale * np.eye(space.dim), space.shape + (space.dim, space.dim)).copy()
        return cls(A, min(scale, 1 / scale))

    @classmethod
    def checkerboard(cls, space: PeriodicGrid, low: float = 0.2, high: float = 5.0,
                     blocks: int = 4, lam: float | None = None) -> "Coefficients":
        """``low I`` and ``high I`` on alternating blocks of a ``blocks^dim`` pattern."""
        j = np.arange(space.cells) * blocks // space.cells
        parity = sum(np.meshgrid(*([j] * space.dim), indexing="ij")) % 2
        s = np.where(parity == 0, low, high)
        A = s[..., None, None] * np.eye(space.dim)
        return cls(A, lam if lam is not None else min(low, 1 / high))


def mean_zero(space: PeriodicGrid, g: np.ndarray) -> tuple[np.ndarray, complex]:
    """Project ``g`` onto the range of the operator.

    Removes the mean (returned) and, on even grids, the few alternating modes
    that the Nyquist-free gradient cannot see.
    """
    m = np.mean(g)
    gh = np.fft.fftn(g)
    gh[kernel_modes(space)] = 0.0
    out = np.fft.ifftn(gh)
    return (out.real if np.isrealobj(g) else out), m


def _apply(space, coeffs, a, u):
    Du = apply_symbol(space, u, riesz_gradient(a), return_complex=True)
    ADu = np.moveaxis(np.einsum("...ij,...j->...i", coeffs.A, np.moveaxis(Du, 0, -1)), -1, 0)
    out = apply_symbol(space, ADu, riesz_gradient_adjoint(a), return_complex=True)
    if np.isrealobj(u) and np.isrealobj(coeffs.A):
        return out.real
    return out


def apply_operator(space: PeriodicGrid, coeffs: Coefficients, a: float, u) -> np.ndarray:
    """``L u = (D^a)* (A D^a u)`` via the spectral multipliers.

    A non-zero mean of ``u`` is removed first (with a warning); constants lie
    in the kernel anyway.
    """
    u = np.asarray(u)
    m = np.mean(u)
    if abs(m) > 1e-12 * max(1.0, float(np.abs(u).max())):
        warnings.warn("input had non-zero mean; projected", MeanProjectionWarning, stacklevel=2)
        u = u - m
    return _apply(space, coeffs, a, u)


def identity_symbol(space: PeriodicGrid, a: float) -> np.ndarray:
    """Symbol of the ``A = I`` operator: ``|xi|^(2a)`` off the Nyquist components."""
    xi, mod = frequencies(space)
    keep = nyquist_free(space)
    safe = np.where(mod > 0, mod, 1.0)
    return sum(x**2 * k for x, k in zip(xi, keep)) * safe ** (2 * a - 2)


def _precondition(space: PeriodicGrid, a: float, r: np.ndarray) -> np.ndarray:
    ker = kernel_modes(space)
    sym = identity_symbol(space, a)
    mult = np.where(ker, 0.0, 1.0 / np.where(ker, 1.0, sym))
    out = np.fft.ifftn(mult * np.fft.fftn(r, norm="ortho"), norm="ortho")
    return out.real if np.isrealobj(r) else out


@dataclass
class PDEProblem:
    """Data of ``(D^a)*(A D^a u) = (D^a)* F + f`` on a periodic grid.

    ``F`` has shape ``(dim, *grid)``; ``f`` has the grid shape, and its mean
    is removed before solving (the removed value is reported).
    """

    space: PeriodicGrid
    coeffs: Coefficients
    a: float
    F: np.ndarray | None = None
    f: np.ndarray | None = None
    tol: float = 1e-10
    max_iters: int = 10_000
    method: str = "auto"

    def __post_init__(self):
        sp = self.space
        if not 0 < self.a < 1:
            raise ValueError("order a must lie in (0, 1)")
        self.F = np.zeros((sp.dim,) + sp.shape) if self.F is None else np.asarray(self.F)
        self.f = np.zeros(sp.shape) if self.f is None else np.asarray(self.f)
        if self.F.shape != (sp.dim,) + sp.shape or self.f.shape != sp.shape:
            raise ValueError("F must be (dim, *grid) and f must match the grid")

    def rhs(self) -> tuple[np.ndarray, complex]:
        f0, m = mean_zero(self.space, self.f)
        b = apply_symbol(self.space, self.F, riesz_gradient_adjoint(self.a), return_complex=True) + f0
        if np.isrealobj(self.F) and np.isrealobj(self.f):
            b = b.real
        return b, m


@dataclass
class SolveResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool
    method: str
    history: list = field(default_factory=list)
    f_mean_removed: complex = 0.0

    def summary(self) -> dict:
        m = complex(self.f_mean_removed)
        return {"residual": self.residual, "iterations": self.iterations,
                "converged": self.converged, "method": self.method,
                "f_mean_removed": [m.real, m.imag]}


def l2_norm(space: PeriodicGrid, g: np.ndarray) -> float:
    """``(sum |g|^2 mu)^(1/2)`` with the grid cell measure."""
    return float(np.sqrt(np.sum(np.abs(g) ** 2) * space.cell_measure))


def _inner(space, x, y) -> complex:
    return np.vdot(y, x) * space.cell_measure


def solve(problem: PDEProblem) -> SolveResult:
    """Preconditioned iteration until ``|L u - rhs|_2 <= tol``.

    Methods: ``cg`` (conjugate gradients, Hermitian ``A``), ``richardson``
    (damped with step ``lam``) and ``gmres`` (general ``A``, through SciPy).
    ``auto`` picks ``cg`` for Hermitian coefficients and ``gmres`` otherwise.
    """
    sp, co, a = problem.space, problem.coeffs, problem.a
    b, fmean = problem.rhs()
    method = problem.method
    if method == "auto":
        method = "cg" if co.hermitian else "gmres"
    L = lambda v: _apply(sp, co, a, v)
    P = lambda v: _precondition(sp, a, v)
    dtype = complex if (np.iscomplexobj(b) or np.iscomplexobj(co.A)) else float
    x = np.zeros(sp.shape, dtype=dtype)
    history: list = []
    if method == "cg":
        r = b - L(x)
        z = P(r)
        p = z.copy()
        rz = _inner(sp, r, z)
        it = 0
        res = l2_norm(sp, r)
        history.append(res)
        while res > problem.tol and it < problem.max_iters:
            Ap = L(p)
            alpha = rz / _inner(sp, Ap, p)
            x = x + alpha * p
            r = r - alpha * Ap
            it += 1
            if it % 50 == 0:
                r = b - L(x)  # refresh against drift
            res = l2_norm(sp, r)
            history.append(res)
            z = P(r)
            rz_new = _inner(sp, r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if dtype is float:
            x = np.real(x)
    elif method == "richardson":
        tau = co.lam
        it = 0
        r = b - L(x)
        res = l2_norm(sp, r)
        history.append(res)
        while res > problem.tol and it < problem.max_iters:
            x = x + tau * P(r)
            r = b - L(x)
            res = l2_norm(sp, r)
            history.append(res)
            it += 1
    elif method == "gmres":
        n = sp.n_points
        op = LinearOperator((n, n), matvec=lambda v: L(v.reshape(sp.shape)).ravel(), dtype=complex)
        pre = LinearOperator((n, n), matvec=lambda v: P(v.reshape(sp.shape)).ravel(), dtype=complex)
        # scipy stops on the preconditioned residual; tighten until the true one passes
        count = [0]

        def cb(rk):
            count[0] += 1
            history.append(float(rk))

        xs = np.zeros(n, dtype=complex)
        bf = b.ravel().astype(complex)
        atol = problem.tol / math.sqrt(sp.cell_measure)
        for _ in range(8):
            xs, _ = gmres(op, bf, x0=xs, M=pre, rtol=0.0, atol=atol, restart=100,
                          maxiter=max(1, (problem.max_iters - count[0]) // 100),
                          callback=cb, callback_type="pr_norm")
            true = l2_norm(sp, bf - op.matvec(xs))
            if true <= problem.tol or count[0] >= problem.max_iters:
                break
            atol *= 0.5 * problem.tol / true
        x = xs.reshape(sp.shape)
        if dtype is float:
            x = x.real
        it = count[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    x = x - np.mean(x)
    res = l2_norm(sp, b - L(x))
    return SolveResult(x, res, it, bool(res <= problem.tol), method, history, fmean)


def oracle_solve_identity(space: PeriodicGrid, a: float, F=None, f=None) -> np.ndarray:
    """Closed-form solution for ``A = I``: ``u^ = [(D^a)*^ F^ + f^] / |xi|^(2a)``.

    The right-hand side is read modulo the operator kernel, as in the solver.
    """
    xi, mod = frequencies(space)
    nz = ~kernel_modes(space)
    safe = np.where(mod > 0, mod, 1.0)
    keep = nyquist_free(space)
    sym = np.where(nz, identity_symbol(space, a), 1.0)
    num = np.zeros(space.shape, dtype=complex)
    if F is not None:
        Fh = np.fft.fftn(np.asarray(F), axes=tuple(range(1, space.dim + 1)))
        for j in range(space.dim):
            num += -1j * xi[j] * keep[j] * safe ** (a - 1) * Fh[j]
    if f is not None:
        num += np.fft.fftn(np.asarray(f))
    uh = np.where(nz, num / sym, 0.0)
    u = np.fft.ifftn(uh)
    real = (F is None or np.isrealobj(F)) and (f is None or np.isrealobj(f))
    return u.real if real else u


@dataclass
class PDERHReport:
    """Per-ball combined-estimate constants and the higher-integrability gain."""

    prop_constant: float
    rows: list
    gain: RHReport
    eps_hat: float | None
    constant_at_gain: float | None
    rho: float
    two_star: float
    warnings: list
    notes: list
    family: dict

    def summary(self) -> dict:
        return {"prop_constant": self.prop_constant, "eps_hat": self.eps_hat,
                "curve": [list(c) for c in self.gain.curve],
                "constant_at_gain": self.constant_at_gain, "rho": self.rho,
                "two_star": self.two_star, "warnings": list(self.warnings),
                "notes": list(self.notes), "family": self.family}


def solution_rh_report(result: SolveResult, problem: PDEProblem, family: Sequence[Ball],
                       rho: float = 1.5, p_grid: Sequence[float] | None = None,
                       C_max: float = 50.0) -> PDERHReport:
    """Reverse Hoelder data of ``v = |D^a u| + |(-Delta)^(a/2) u|``.

    Each ball ``B = B(x, r)`` is scored by ``(avg_B v^2)^(1/2)`` against

        (avg_4B |D^a u|^rho)^(1/rho) + int_2B |(-Delta)^(a/2) u|
        + (avg_4B |F|^2)^(1/2) + sum_k 2^-k avg_{2^k B} |D^a u|
        + r^a (sum_k 2^(-k(1-a)) avg_{2^k B} |f|^(2_*))^(1/2_*)

    with ``2_* = 2n / (n + 2a)``; the ``(-Delta)^(a/2)`` term is an integral,
    not an average, so its weight changes with the scale.  The gain comes
    from :func:`estimate_gain` on ``v`` with ``q = 2``, ``s = rho``, tail
    weights ``2^(-k(1-a))``, ``f = |F|`` and ``h = |f|`` with factor ``r^a``;
    ``eps_hat = p_hat - 2``.
    """
    sp, a = problem.space, problem.a
    n = sp.dim
    two_star = 2 * n / (n + 2 * a)
    warn: list = []
    if rho <= 2 * n / (n + 2):
        warn.append(f"rho = {rho} not above 2n/(n+2) = {2 * n / (n + 2)}")
        warnings.warn(warn[-1], ParameterRangeWarning, stacklevel=2)
    if p_grid is None:
        p_grid = 2 + np.round(np.arange(1, 21) * 0.05, 10)
    u = result.u
    Du = apply_symbol(sp, u, riesz_gradient(a), return_complex=True)
    absD = np.sqrt(np.sum(np.abs(Du) ** 2, axis=0)).ravel()
    absL = np.abs(apply_symbol(sp, u, frac_laplacian(a), return_complex=True)).ravel()
    v = absD + absL
    absF = np.sqrt(np.sum(np.abs(problem.F) ** 2, axis=0)).ravel()
    f0, _ = mean_zero(sp, problem.f)
    absf = np.abs(f0).ravel()
    Fs = np.stack([v**2, absD**rho, absL, absF**2, absD, absf**two_star], axis=1)
    gmean = Fs.T @ sp.weights / sp.total_measure
    half = TailWeights.geometric(0.5)
    frac = TailWeights.geometric(2.0 ** (-(1 - a)))
    rows: list = [None] * len(family)
    for c, members in _group(family).items():
        avg = RadialAverager(sp, Fs, c)
        ave = lambda r: gmean if r > sp.diameter else avg.average(r)
        for i in members:
            r = family[i].radius
            lhs = float(ave(r)[0]) ** 0.5
            t1 = float(ave(4 * r)[1]) ** (1 / rho)
            t2 = float(avg.integral(2 * r)[2]) if 2 * r <= sp.diameter else float(gmean[2] * sp.total_measure)
            t3 = float(ave(4 * r)[3]) ** 0.5
            t4 = float(tail_from_averager(avg, r, half, gmean)[4])
            t5 = r**a * float(tail_from_averager(avg, r, frac, gmean)[5]) ** (1 / two_star)
            rhs = t1 + t2 + t3 + t4 + t5
            rows[i] = {"center": c, "radius": r, "lhs": lhs, "rhs": rhs,
                       "ratio": _ratio(lhs, rhs)}
    prop = max((r["ratio"] for r in rows), default=0.0)
    inst = RHInstance(sp, v, 2.0, rho, frac, f=absF, h=absf, beta=a)
    warn += inst.warnings
    gain = estimate_gain(inst, family, p_grid, C_max)
    eps_hat = None if gain.p_hat is None else gain.p_hat - 2
    at = None if gain.p_hat is None else dict(gain.curve)[gain.p_hat]
    notes = ["the (-Delta)^(a/2) term is integrated over 2B without normalisation"]
    return PDERHReport(prop, rows, gain, eps_hat, at, rho, two_star, warn, notes,
                       describe_family(family))
