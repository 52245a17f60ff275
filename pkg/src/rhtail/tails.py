"""Tail functionals, maximal operators and sequence transforms.

The central object is the tail functional

    a_u(B) = sum_k alpha_k avg(u, N^k B),

a weighted sum of averages over the dilates of a ball.  On a bounded space the
dilates eventually cover everything, after which every remaining average is the
global mean; the sum is then closed in finite time with the remaining mass of
the weight sequence, so no truncation error is incurred.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import EmptyBall, InadmissibleBall, NonNegativityViolated
from .homspace import Ball, PeriodicGrid, PointCloud, RadialAverager, Space


@dataclass(frozen=True)
class TailWeights:
    """Non-increasing summable weights ``alpha_k`` with a dilation base ``N``.

    Use :meth:`geometric` (``alpha_k = alpha0 * ratio**k``) or :meth:`explicit`
    (finite list, zero beyond its end).
    """

    kind: str
    base: float = 2.0
    alpha0: float = 1.0
    ratio: float = 0.5
    values: tuple = ()

    def __post_init__(self):
        if not self.base > 1:
            raise ValueError("dilation base must exceed 1")
        if self.kind == "geometric":
            if not (0 < self.ratio < 1 and self.alpha0 > 0):
                raise ValueError("geometric weights need alpha0 > 0 and 0 < ratio < 1")
        elif self.kind == "explicit":
            v = np.asarray(self.values, dtype=float)
            if v.size == 0 or np.any(v < 0) or not np.all(np.isfinite(v)) or v[0] <= 0:
                raise ValueError("explicit weights must be finite, non-negative, with alpha_0 > 0")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def geometric(cls, ratio: float, alpha0: float = 1.0, base: float = 2.0) -> "TailWeights":
        return cls("geometric", base=float(base), alpha0=float(alpha0), ratio=float(ratio))

    @classmethod
    def explicit(cls, values: Sequence[float], base: float = 2.0) -> "TailWeights":
        return cls("explicit", base=float(base), values=tuple(float(v) for v in values))

    @property
    def length(self) -> int | None:
        return None if self.kind == "geometric" else len(self.values)

    def term(self, k: int) -> float:
        if self.kind == "geometric":
            return self.alpha0 * self.ratio**k
        return self.values[k] if k < len(self.values) else 0.0

    def mass_from(self, k: int) -> float:
        """``sum_{j >= k} alpha_j``."""
        if self.kind == "geometric":
            return self.alpha0 * self.ratio**k / (1 - self.ratio)
        return float(math.fsum(self.values[k:]))

    @property
    def total(self) -> float:
        return self.mass_from(0)

    def prefix(self, n: int) -> np.ndarray:
        return np.array([self.term(k) for k in range(n)])

    def to_json(self) -> dict:
        if self.kind == "geometric":
            params = {"alpha0": self.alpha0, "ratio": self.ratio, "base": self.base}
        else:
            params = {"values": list(self.values), "base": self.base}
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json(cls, obj: dict) -> "TailWeights":
        p = dict(obj["params"])
        if obj["kind"] == "geometric":
            return cls.geometric(p["ratio"], p.get("alpha0", 1.0), p.get("base", 2.0))
        if obj["kind"] == "explicit":
            return cls.explicit(p["values"], p.get("base", 2.0))
        raise ValueError(f"unknown weight kind {obj['kind']!r}")


def tail_from_averager(avg: RadialAverager, radius: float, tw: TailWeights, gmean):
    """Tail sum for one ball given a radial averager about its centre.

    ``gmean`` is the global mean of the averaged field(s); it replaces the
    averages of all dilates that already cover the space.
    """
    diam = avg.space.diameter
    total = 0.0
    k = 0
    r = radius
    while True:
        if tw.length is not None and k >= tw.length:
            return total
        if r > diam:
            return total + tw.mass_from(k) * np.asarray(gmean)
        total = total + tw.term(k) * avg.average(r)
        k += 1
        r = radius * tw.base**k


def _check_nonnegative(u: np.ndarray, name: str = "u") -> None:
    if np.any(u < 0):
        raise NonNegativityViolated(f"{name} must be non-negative (min {u.min():.3g})")


def tail_functional(space: Space, u, ball: Ball, tw: TailWeights) -> float:
    """``a_u(B) = sum_k alpha_k avg(u, N^k B)`` for non-negative ``u``."""
    u = space.flat(u)
    _check_nonnegative(u)
    if math.isinf(ball.radius):
        return tw.total * space.global_mean(u)
    avg = RadialAverager(space, u, ball.center)
    if avg.count(ball.radius) == 0:
        raise EmptyBall(f"{ball} contains no sample points")
    return float(tail_from_averager(avg, ball.radius, tw, space.global_mean(u)))


def _distance_to_complement(space: Space, center: int, omega) -> float:
    if omega is None:
        return math.inf
    omega = np.asarray(omega, dtype=bool).reshape(space.n_points)
    if not omega[center]:
        raise InadmissibleBall(f"centre {center} lies outside the domain")
    d = space.distances_from(center)[~omega]
    return float(d.min()) if d.size else math.inf


_MODES = {"loc": (0.5, 4), "full": (0.75, 1)}


def sup_functional(space: Space, u, ball: Ball, omega=None, mode: str = "loc") -> float:
    """Largest average over concentric balls ``B(x, t)``, ``t`` from the radius up.

    Without a domain the range is unbounded, so the whole-space average is
    included.  With a domain mask ``omega`` the range stops before
    ``c * dist(x, complement)``, with ``c = 1/2`` in ``loc`` mode and
    ``c = 3/4`` in ``full`` mode.  Every distinct average in the range is
    examined, which is the exact supremum for sampled data.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be 'loc' or 'full', got {mode!r}")
    u = space.flat(u)
    dc = _distance_to_complement(space, ball.center, omega)
    c = _MODES[mode][0]
    if mode == "loc" and 2 * ball.radius > dc:
        raise InadmissibleBall(f"2B is not contained in the domain for {ball}")
    if mode == "full" and ball.radius > dc:
        raise InadmissibleBall(f"B is not contained in the domain for {ball}")
    avg = RadialAverager(space, u, ball.center)
    return float(np.max(avg.shell_averages(ball.radius, c * dc)))


def domain_tail(space: Space, u, ball: Ball, omega, mode: str, tw: TailWeights) -> float:
    """Tail restricted to dilates that stay inside a domain.

    Term ``k`` is kept while ``2^j N^k B`` lies in ``omega``, with ``j = 4`` in
    ``loc`` mode and ``j = 1`` in ``full`` mode.  With ``omega=None`` this is
    :func:`tail_functional`.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be 'loc' or 'full', got {mode!r}")
    if omega is None:
        return tail_functional(space, u, ball, tw)
    u = space.flat(u)
    _check_nonnegative(u)
    dc = _distance_to_complement(space, ball.center, omega)
    pad = 2.0 ** _MODES[mode][1]
    avg = RadialAverager(space, u, ball.center)
    total, k = 0.0, 0
    while tw.length is None or k < tw.length:
        r = ball.radius * tw.base**k
        if pad * r > dc:
            break
        total += tw.term(k) * float(avg.average(r))
        k += 1
    if k == 0:
        raise InadmissibleBall(f"no admissible dilate of {ball} in the domain")
    return total


# --------------------------------------------------------------------------
# maximal operators

MAXIMAL_KINDS = ("uncentered", "fractional", "volume_power")


def maximal_radii(space: Space) -> np.ndarray:
    """Dyadic radii ``h 2^j`` of the discrete maximal family.

    ``h`` is the grid spacing (smallest positive distance on clouds); the last
    radius is the first one exceeding the diameter.
    """
    if isinstance(space, PeriodicGrid):
        h = space.spacing
    else:
        h = float(space._sorted[:, 1].min())
    radii = [h]
    while radii[-1] <= space.diameter:
        radii.append(radii[-1] * 2)
    return np.array(radii)


def maximal(space: Space, u, variant: str = "uncentered", exponent: float = 0.0) -> np.ndarray:
    """Discrete uncentered maximal function over dyadic balls.

    ``Mu(x) = max over balls B(y, r) containing x of  w(B) avg(|u|, B)``, with
    ``w = 1`` (``uncentered``), ``r**exponent`` (``fractional``) or
    ``mu(B)**exponent`` (``volume_power``).  Radii are :func:`maximal_radii`
    and centres range over all sample points.  The continuum maximal function
    of a non-negative field is bounded by :func:`maximal_comparability` times
    this one.
    """
    if variant not in MAXIMAL_KINDS:
        raise ValueError(f"unknown maximal variant {variant!r}")
    shape = np.shape(u)
    v = np.abs(space.flat(u)).astype(float)
    best = np.zeros(space.n_points)
    for r in maximal_radii(space):
        if isinstance(space, PeriodicGrid):
            a, mu = _grid_window_max(space, v, r)
        else:
            a, mu = _cloud_window_max(space, v, r)
        if variant == "fractional":
            a = a * r**exponent
        elif variant == "volume_power":
            a = a * mu**exponent
        best = np.maximum(best, _spread_max(space, a, r))
    return best.reshape(shape)


def _grid_window_max(space: PeriodicGrid, v: np.ndarray, r: float):
    off = space.offsets_within(r)
    count = off.shape[0]
    mu = count * space.cell_measure
    if count == space.n_points:
        return np.full(space.n_points, v.mean()), mu
    if space.dim == 1:
        m = (count - 1) // 2
        ext = np.concatenate([v[-m:] if m else v[:0], v, v[:m]])
        cs = np.concatenate([[0.0], np.cumsum(ext)])
        return (cs[count:] - cs[:-count]) / count, mu
    kernel = np.zeros(space.shape)
    kernel[tuple((off % space.cells).T)] = 1.0
    # correlation with the ball indicator: sum over y + o of v
    s = np.real(np.fft.ifftn(np.fft.fftn(v.reshape(space.shape)) * np.conj(np.fft.fftn(kernel))))
    return s.ravel() / count, mu


def _cloud_window_max(space: PointCloud, v: np.ndarray, r: float):
    mask = space.D < r
    mu = mask @ space.weights
    return (mask @ (v * space.weights)) / mu, mu


def _spread_max(space: Space, a: np.ndarray, r: float) -> np.ndarray:
    """``max over y with d(x, y) < r`` of ``a(y)``."""
    if isinstance(space, PeriodicGrid):
        off = space.offsets_within(r)
        count = off.shape[0]
        if count == space.n_points:
            return np.full(space.n_points, a.max())
        if space.dim == 1:
            return maximum_filter1d(a, size=count, mode="wrap")
        g = a.reshape(space.shape)
        out = g.copy()
        for o in off[1:]:
            np.maximum(out, np.roll(g, tuple(o), axis=tuple(range(space.dim))), out=out)
        return out.ravel()
    mask = space.D < r
    return np.max(np.where(mask, a[None, :], -np.inf), axis=1)


def maximal_comparability(space: Space) -> float:
    """Exact factor ``kappa`` with ``M_true <= kappa * M_discrete`` for ``u >= 0``.

    Any ball ``B(y, s)`` sits inside ``B(y, R)`` with ``R`` the smallest family
    radius ``>= s``, so ``kappa = sup mu(B(y, R)) / mu(B(y, s))``, evaluated
    over every distinct shell.
    """
    radii = maximal_radii(space)
    centers = (0,) if isinstance(space, PeriodicGrid) else range(space.n_points)
    kappa = 1.0
    for c in centers:
        idx, d = space.neighbors(c)
        cw = np.cumsum(space.weights[idx])
        last = np.flatnonzero(np.r_[d[1:] != d[:-1], True])
        vals = d[last]
        for i in range(len(vals) - 1):
            s = vals[i + 1]
            R = radii[np.searchsorted(radii, s, side="left")]
            outer = cw[np.searchsorted(d, R, side="left") - 1]
            kappa = max(kappa, outer / cw[last[i]])
    return float(kappa)


# --------------------------------------------------------------------------
# sequence transforms

def _is_integral(x: float) -> bool:
    return float(x).is_integer()


def _block_of(j: int, m: float, n: float) -> int:
    """Least ``k >= 0`` with ``n**j <= m**k``."""
    if _is_integral(m) and _is_integral(n):
        mi, target = int(m), int(n) ** j
        k, p = 0, 1
        while p < target:
            p *= mi
            k += 1
        return k
    return max(0, math.ceil(j * math.log(n) / math.log(m) - 1e-12))


def _ell_plus_one(m: float, n: float) -> int:
    """``l + 1`` with ``l < ln m / ln n <= l + 1``: least ``t >= 1`` with ``n**t >= m``."""
    if _is_integral(m) and _is_integral(n):
        t, p = 1, int(n)
        while p < int(m):
            p *= int(n)
            t += 1
        return t
    return max(1, math.ceil(math.log(m) / math.log(n) - 1e-12))


def _check_order(m: float, n: float) -> None:
    if not (1 < n <= m):
        raise ValueError(f"sequence transforms need 1 < n <= m, got m={m}, n={n}")


def stretch(seq: Sequence[float], m: float, n: float) -> np.ndarray:
    """``(S alpha)_j = alpha_k`` for the block ``m^(k-1) < n^j <= m^k``.

    A finite input is read as zero beyond its end; the output stops after the
    last block the input reaches.
    """
    _check_order(m, n)
    a = np.asarray(seq, dtype=float)
    out = []
    j = 0
    while True:
        k = _block_of(j, m, n)
        if k >= a.size:
            break
        out.append(a[k])
        j += 1
    return np.array(out)


def regroup(seq: Sequence[float], m: float, n: float) -> np.ndarray:
    """``(R alpha)_k`` = block sum over ``m^(k-1) < n^j <= m^k`` plus a correction.

    The correction is zero when the block has ``l + 1`` terms and otherwise the
    first term of the block, where ``l < ln m / ln n <= l + 1``.  A finite input
    is read as zero beyond its end, so the last block may be partial.
    """
    _check_order(m, n)
    a = np.asarray(seq, dtype=float)
    lp1 = _ell_plus_one(m, n)
    blocks = [_block_of(j, m, n) for j in range(a.size)]
    K = blocks[-1] + 1 if blocks else 0
    out = np.zeros(K)
    first = {}
    for j, k in enumerate(blocks):
        out[k] += a[j]
        first.setdefault(k, j)
    for k in range(K):
        size = _block_size(k, m, n, first[k])
        if size != lp1:
            out[k] += a[first[k]]
    return out


def _block_size(k: int, m: float, n: float, j0: int) -> int:
    j = j0
    while _block_of(j + 1, m, n) == k:
        j += 1
    return j - j0 + 1


def geometric_comparability(m: float, n: float, gamma: float, terms: int = 64) -> dict:
    """Term-wise ratios of transformed geometric sequences and their exact bounds.

    ``stretch(m^(-gamma k))_j / n^(-gamma j)`` lies in ``(m^-gamma, 1]`` and
    ``regroup(n^(-gamma j))_k / m^(-gamma k)`` in
    ``[1, m^gamma (1 + 1 / (1 - n^-gamma)))``.  Only complete blocks of the
    finite inputs are compared.
    """
    _check_order(m, n)
    g = float(gamma)
    src_m = float(m) ** (-g * np.arange(terms))
    S = stretch(src_m, m, n)
    s_ratio = S / float(n) ** (-g * np.arange(S.size))
    src_n = float(n) ** (-g * np.arange(terms))
    R = regroup(src_n, m, n)
    full = R.size - 1 if R.size > 1 else R.size  # the last block may be truncated
    r_ratio = R[:full] / float(m) ** (-g * np.arange(full))
    s_lo, s_hi = float(m) ** (-g), 1.0
    r_lo, r_hi = 1.0, float(m) ** g * (1 + 1 / (1 - float(n) ** (-g)))
    return {"m": m, "n": n, "gamma": g,
            "stretch": {"min": float(s_ratio.min()), "max": float(s_ratio.max()),
                        "lower": s_lo, "upper": s_hi,
                        "holds": bool(s_ratio.min() > s_lo * (1 - 1e-12) and s_ratio.max() <= s_hi * (1 + 1e-12))},
            "regroup": {"min": float(r_ratio.min()), "max": float(r_ratio.max()),
                        "lower": r_lo, "upper": r_hi,
                        "holds": bool(r_ratio.min() >= r_lo * (1 - 1e-12) and r_ratio.max() <= r_hi * (1 + 1e-12))}}


@dataclass
class DilationReport:
    lhs: float
    rhs: float
    ratio: float
    constant: float
    doubling_bound: float
    new_weights: np.ndarray
    passed: bool


def _weight_prefix(tw: TailWeights) -> np.ndarray:
    if tw.length is not None:
        return np.asarray(tw.values, dtype=float)
    n = 1
    while tw.mass_from(n) > 1e-17 * tw.total:
        n += 1
    return tw.prefix(n)


def dilation_change_check(space: Space, u, ball: Ball, tw: TailWeights, M: float) -> DilationReport:
    """Compare the base-``N`` tail with a base-``M`` tail built from the same weights.

    For ``M > N`` the new weights are ``R^{M,N} alpha``; for ``M < N`` they are
    ``S^{M^l,M} R^{M^l,N} alpha`` with ``l`` the least integer ``>= ln N / ln M``.
    Each base-``N`` dilate lies inside a base-``M`` dilate less than ``lam``
    times larger (``lam = M`` or ``M^l``), so the ratio of the two tails is
    bounded by ``sup mu(lam B) / mu(B)``, which is computed exactly and
    reported with the iterated doubling bound ``C_d^ceil(log2 lam)``.
    """
    N = tw.base
    alpha = _weight_prefix(tw)
    if M > N:
        beta, lam = regroup(alpha, M, N), M
    elif M < N:
        ell = _ell_plus_one(N, M)  # least integer >= ln N / ln M
        if float(M) ** ell < N:
            ell += 1
        lam = float(M) ** ell
        beta = stretch(regroup(alpha, lam, N), lam, M)
    else:
        beta, lam = alpha.copy(), 1.0
    lhs = tail_functional(space, u, ball, tw)
    rhs = tail_functional(space, u, ball, TailWeights.explicit(beta, base=M))
    constant = space.max_volume_ratio(lam) if lam > 1 else 1.0
    cd = space.doubling_constant()
    dbound = cd ** math.ceil(math.log2(lam)) if lam > 1 else 1.0
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return DilationReport(lhs, rhs, ratio, constant, dbound, beta, bool(ratio <= constant * (1 + 1e-12)))


# --------------------------------------------------------------------------
# convolution conditions

@dataclass
class SeqTriple:
    """Three non-negative sequences ``alpha``, ``alpha~``, ``alpha#`` and ``tau``."""

    alpha: np.ndarray
    alpha_tilde: np.ndarray
    alpha_sharp: np.ndarray
    tau: float

    def __post_init__(self):
        for name in ("alpha", "alpha_tilde", "alpha_sharp"):
            v = np.asarray(getattr(self, name), dtype=float)
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative")
            setattr(self, name, v)
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def geometric(cls, N: float, gamma: float, gamma_prime: float, tau: float, length: int) -> "SeqTriple":
        """``alpha_k = N^(-gamma k)``, ``alpha~_k = N^(-gamma' tau k)``, ``alpha#_k = N^(-gamma' k)``."""
        k = np.arange(length)
        a = float(N) ** (-gamma * k)
        return cls(a, float(N) ** (-gamma_prime * tau * k), float(N) ** (-gamma_prime * k), tau)


@dataclass
class ConvolutionReport:
    ratios: dict
    maxima: dict
    bounded: dict
    ok: bool


def _aitken(r: np.ndarray, m: int) -> float:
    d1, d2 = r[m] - r[m - 1], r[m - 1] - r[m - 2]
    if d1 <= 0:
        return float(r[m])
    rho = d1 / d2 if d2 > 0 else math.inf
    return float(r[m] + d1 * rho / (1 - rho)) if rho < 1 else math.inf


def _settles(r: np.ndarray) -> tuple[bool, float]:
    """Whether a ratio curve converges, and its extrapolated limit."""
    if not np.all(np.isfinite(r)):
        return False, math.inf
    m = r.size - 1
    if m < 4:
        return True, float(np.max(r))
    tail = np.diff(r[m // 2:])
    if np.all(tail <= 1e-15 * max(1.0, abs(r[m]))):
        return True, float(np.max(r))
    a, b = _aitken(r, m // 2), _aitken(r, m)
    if not (math.isfinite(a) and math.isfinite(b)):
        return False, math.inf
    if abs(b - a) > 0.05 * abs(b):
        return False, math.inf
    return True, b


def convolution_conditions(trip: SeqTriple, s2: float, q: float, N: float, beta: float,
                           m_max: int) -> ConvolutionReport:
    """Evaluate the three convolution ratios for ``m = 0..m_max``.

    ``c1(m) = sum_k alpha~_k alpha_{m-k}^tau / alpha~_m``,
    ``c2(m) = sum_k alpha#_k alpha_{m-k} / alpha#_m``,
    ``c3(m) = sum_k alpha~_k alpha_{m-k}^(s2/q) N^((m-k) beta s2) / alpha~_m``.

    A curve counts as bounded when it is eventually non-increasing, or when
    the Aitken extrapolations of its limit taken at ``m_max // 2`` and at
    ``m_max`` are finite and agree within 5 percent (geometric convergence
    makes them equal; growth makes them drift).  ``maxima`` holds the
    largest computed value or the extrapolated limit, whichever is larger.
    """
    L = m_max + 1
    for name in ("alpha", "alpha_tilde", "alpha_sharp"):
        if getattr(trip, name).size < L:
            raise ValueError(f"{name} needs at least {L} terms")
    a, at, ash = trip.alpha[:L], trip.alpha_tilde[:L], trip.alpha_sharp[:L]
    i = np.arange(L)
    terms = {
        "tilde_tau": (at, a**trip.tau),
        "sharp": (ash, a),
        "tilde_beta": (at, a ** (s2 / q) * float(N) ** (i * beta * s2)),
    }
    ratios, maxima, bounded = {}, {}, {}
    for key, (den, other) in terms.items():
        conv = np.convolve(den, other)[:L]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0, conv / den, np.where(conv > 0, np.inf, 0.0))
        ratios[key] = r
        ok, limit = _settles(r)
        maxima[key] = float(max(np.max(r), limit))
        bounded[key] = ok
    return ConvolutionReport(ratios, maxima, bounded, all(bounded.values()))


def geometric_triple_admissible(gamma: float, gamma_prime: float, tau: float, s2: float,
                                q: float, beta: float) -> bool:
    """Sufficient condition for bounded ratios with geometric sequences.

    Needs ``0 < gamma' < gamma`` and ``beta s2 < gamma s2 / q - gamma' tau``.
    """
    return 0 < gamma_prime < gamma and beta * s2 < gamma * s2 / q - gamma_prime * tau


# --------------------------------------------------------------------------
# radial kernels

@dataclass
class KernelTail:
    value: float
    lower: float
    upper: float


def kernel_tail(space: Space, u, ball: Ball, profile: Callable[[np.ndarray], np.ndarray],
                base: float = 2.0, normalize: bool = False) -> KernelTail:
    """Kernel integral ``sum_y phi(d(x, y) / r) u(y) mu(y) / r^n`` with step bounds.

    ``phi`` must be non-negative, bounded and non-increasing on the sampled
    distances.  Cutting ``phi`` at the levels ``base**k`` gives a layer-cake
    sum of ball integrals squeezed between two tails; summing by parts,
    ``upper`` is the tail with weights ``(phi(base^(k-1)) - phi(base^k))
    mu(base^k B) / r^n`` and ``lower`` the one with the levels shifted by one.
    With ``normalize=True`` everything is divided by ``mu(B) / r^n`` so that
    the unit-ball indicator gives the plain ball average.
    """
    u = space.flat(u)
    _check_nonnegative(u)
    x, r = ball.center, ball.radius
    d = space.distances_from(x)
    vals = np.asarray(profile(d / r), dtype=float)
    sd = np.sort(np.unique(d))
    pv = np.asarray(profile(sd / r), dtype=float)
    if np.any(pv < 0) or not np.all(np.isfinite(pv)):
        raise ValueError("kernel profile must be finite and non-negative")
    if np.any(np.diff(pv) > 0):
        raise ValueError("kernel profile must be non-increasing")
    n = space.homogeneous_dimension
    scale = r**n
    value = float(np.sum(vals * u * space.weights)) / scale
    avg = RadialAverager(space, u, x)
    phi = lambda t: float(np.asarray(profile(np.array([t])), dtype=float)[0])
    # annulus k holds base^(k-1) <= d/r < base^k (annulus 0 is the ball itself)
    upper = lower = 0.0
    prev, k = 0.0, 0
    while True:
        rk = r * base**k
        cur = float(avg.integral(rk))
        hi = phi(0.0) if k == 0 else phi(base ** (k - 1))
        lo = phi(base**k)
        upper += hi * (cur - prev)
        lower += lo * (cur - prev)
        if rk > space.diameter:
            break
        prev, k = cur, k + 1
    upper, lower = upper / scale, lower / scale
    if normalize:
        norm = float(avg.measure(r)) / scale
        value, lower, upper = value / norm, lower / norm, upper / norm
    return KernelTail(value, lower, upper)
