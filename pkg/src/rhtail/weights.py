"""Very weak weight classes measured on discrete spaces.

All constants are maxima of per-ball (or per ball and subset) ratios over a
finite family.  Membership of a continuum weight in a class is inferred from
stability of the constant under grid refinement (see
:func:`class_agreement`), since every constant is finite on a finite grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonNegativityViolated
from .homspace import Ball, PeriodicGrid, RadialAverager, Space, ball_family, make_test_field
from .tails import TailWeights, maximal, maximal_comparability, tail_from_averager

QUANTILES = tuple(np.round(np.arange(0.1, 0.95, 0.1), 10))


@dataclass
class WeightReport:
    """Constant of one weight class with the per-ball rows behind it."""

    klass: str
    constant: float
    rows: list
    params: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)
    best: float | None = None

    def summary(self) -> dict:
        out = {"class": self.klass, "constant": self.constant, "params": self.params,
               "n_rows": len(self.rows)}
        if self.curve:
            out["curve"] = [list(c) for c in self.curve]
            out["best"] = self.best
        return out


class SubsetSampler:
    """Subsets ``E`` of a ball used to probe set-function conditions.

    For each ball: the sublevel and superlevel sets of ``w`` at the quantiles
    0.1, ..., 0.9 of its values on the ball, plus ``n_random`` seeded random
    subsets of random size.  Empty sets are dropped.
    """

    def __init__(self, quantiles: Sequence[float] = QUANTILES, n_random: int = 20, seed: int = 0):
        self.quantiles = tuple(quantiles)
        self.n_random = n_random
        self.seed = seed

    def __call__(self, space: Space, w: np.ndarray, members: np.ndarray, ball_index: int):
        vals = w[members]
        out = []
        for t in self.quantiles:
            thr = np.quantile(vals, t)
            out.append((f"sub{t:g}", members[vals <= thr]))
            out.append((f"super{t:g}", members[vals >= thr]))
        rng = np.random.default_rng([self.seed, ball_index])
        for i in range(self.n_random):
            size = int(rng.integers(1, members.size + 1))
            out.append((f"rand{i}", np.sort(rng.choice(members, size=size, replace=False))))
        return [(lab, e) for lab, e in out if e.size]


def _weight(space: Space, w) -> np.ndarray:
    w = np.asarray(space.flat(w), dtype=float)
    if np.any(w < 0):
        raise NonNegativityViolated("weights must be non-negative")
    return w


def _restricted_maximal(space: Space, w: np.ndarray, members: np.ndarray) -> np.ndarray:
    v = np.zeros(space.n_points)
    v[members] = w[members]
    return maximal(space, v)


def vw_ainfty_constant(space: Space, w, family: Sequence[Ball]) -> WeightReport:
    """``max_B  avg_B M(1_B w) / sup_{t >= r} avg(w, B(x, t))``.

    ``M`` is the discrete uncentered maximal function; the comparability
    factor to the continuum operator is reported in ``params``.
    """
    w = _weight(space, w)
    rows = []
    for b in family:
        m = space.members(b)
        mw = _restricted_maximal(space, w, m)
        lhs = float(np.dot(mw[m], space.weights[m]) / space.weights[m].sum())
        rhs = float(np.max(RadialAverager(space, w, b.center).shell_averages(b.radius, math.inf)))
        rows.append({"center": b.center, "radius": b.radius, "lhs": lhs, "rhs": rhs,
                     "ratio": lhs / rhs if rhs > 0 else math.inf})
    C = max(r["ratio"] for r in rows)
    return WeightReport("vw_ainfty", C, rows, {"comparability": maximal_comparability(space)})


def vw_improvement(space: Space, w, family: Sequence[Ball], p_grid: Sequence[float],
                   C_max: float = 10.0) -> WeightReport:
    """Curve ``p -> max_B (avg_B M(1_B w)^p)^(1/p) / sup avg(w)``.

    ``best`` is the largest grid ``p`` whose constant stays below ``C_max``.
    """
    w = _weight(space, w)
    ps = [float(p) for p in p_grid]
    C = np.zeros(len(ps))
    rows = []
    for b in family:
        m = space.members(b)
        mw = _restricted_maximal(space, w, m)[m]
        wt = space.weights[m] / space.weights[m].sum()
        sup = float(np.max(RadialAverager(space, w, b.center).shell_averages(b.radius, math.inf)))
        r = np.array([float(np.dot(mw**p, wt)) ** (1 / p) / sup for p in ps])
        C = np.maximum(C, r)
        rows.append({"center": b.center, "radius": b.radius,
                     **{f"ratio_p{p:g}": float(x) for p, x in zip(ps, r)}})
    curve = [(p, float(c)) for p, c in zip(ps, C)]
    passing = [p for p, c in curve if c <= C_max]
    return WeightReport("vw_improvement", float(C.max()), rows, {"C_max": C_max}, curve,
                        max(passing) if passing else None)


def vw_ainfty_condition(space: Space, w, family: Sequence[Ball], sampler: Callable | None = None,
                        p: float = 2.0) -> WeightReport:
    """Set-function condition: for ``E`` inside ``B``,

    ``inf_{sigma >= 1} (w(E) / w(sigma B)) (mu(sigma B) / mu(B)) <= C (mu(E) / mu(B))^(1/p)``.

    The infimum equals ``w(E) / (mu(B) sup_sigma avg(w, sigma B))`` and is
    evaluated exactly.
    """
    w = _weight(space, w)
    sampler = sampler or SubsetSampler()
    rows = []
    for i, b in enumerate(family):
        m = space.members(b)
        muB = float(space.weights[m].sum())
        sup = float(np.max(RadialAverager(space, w, b.center).shell_averages(b.radius, math.inf)))
        for label, E in sampler(space, w, m, i):
            wE = float(np.dot(w[E], space.weights[E]))
            frac = float(space.weights[E].sum()) / muB
            lhs = wE / (muB * sup) if sup > 0 else 0.0
            rows.append({"center": b.center, "radius": b.radius, "subset": label,
                         "mu_fraction": frac, "lhs": lhs, "ratio": lhs / frac ** (1 / p)})
    C = max(r["ratio"] for r in rows)
    return WeightReport("vw_ainfty_condition", C, rows, {"p": p})


def vw_rh_constant(space: Space, w, family: Sequence[Ball], q: float) -> WeightReport:
    """``max_B (avg_B w^q)^(1/q) / sup_{t >= r} avg(w, B(x, t))``."""
    w = _weight(space, w)
    rows = []
    F = np.stack([w, w**q], axis=1)
    for b in family:
        avg = RadialAverager(space, F, b.center)
        lhs = float(avg.average(b.radius)[1]) ** (1 / q)
        rhs = float(np.max(avg.shell_averages(b.radius, math.inf)[:, 0]))
        rows.append({"center": b.center, "radius": b.radius, "lhs": lhs, "rhs": rhs,
                     "ratio": lhs / rhs if rhs > 0 else math.inf})
    C = max(r["ratio"] for r in rows)
    return WeightReport("vw_rh", C, rows, {"q": q})


def cp_tail(space: PeriodicGrid, w, ball: Ball, p: float, method: str = "integral") -> float:
    """Tail quantity of the ``C_p`` condition on a grid of dimension ``n``.

    ``integral``: ``avg_B``-normalised ``int M(1_B)^p w``, i.e.
    ``mu(B)^(-1) sum_x M(1_B)(x)^p w(x) mu(x)``.
    ``dyadic``: ``sum_{k >= 1} 2^(-k n (p - 1)) avg(w, 2^k B)``, closed at
    saturation.  The two agree up to dimensional constants.
    """
    w = _weight(space, w)
    n = space.dim
    if method == "integral":
        m = space.members(ball)
        ind = np.zeros(space.n_points)
        ind[m] = 1.0
        M = maximal(space, ind)
        return float(np.dot(M**p * w, space.weights) / space.weights[m].sum())
    if method == "dyadic":
        return _dyadic_tail(space, w, ball, 2.0 ** (-n * (p - 1)))
    raise ValueError(f"unknown method {method!r}")


def _dyadic_tail(space: Space, w: np.ndarray, ball: Ball, lam: float) -> float:
    # sum_{k>=1} lam^k avg(w, 2^k B) = lam * a_w(2B) with alpha_k = lam^k
    tw = TailWeights.geometric(lam, alpha0=lam, base=2.0)
    if math.isinf(ball.radius):
        return tw.total * space.global_mean(w)
    avg = RadialAverager(space, w, ball.center)
    return float(tail_from_averager(avg, 2 * ball.radius, tw, space.global_mean(w)))


def cp_check(space: PeriodicGrid, w, family: Sequence[Ball], sampler: Callable | None = None,
             p: float = 2.0, delta_grid: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
             C_max: float = 10.0) -> WeightReport:
    """Measure ``w(E) <= C (mu(E)/mu(B))^delta int M(1_B)^p w`` for each ``delta``.

    Returns the ``(delta, C)`` curve; ``best`` is the largest ``delta`` whose
    constant stays below ``C_max``.
    """
    w = _weight(space, w)
    sampler = sampler or SubsetSampler()
    deltas = [float(d) for d in delta_grid]
    C = np.zeros(len(deltas))
    rows = []
    for i, b in enumerate(family):
        m = space.members(b)
        muB = float(space.weights[m].sum())
        tail = cp_tail(space, w, b, p, "integral") * muB
        for label, E in sampler(space, w, m, i):
            wE = float(np.dot(w[E], space.weights[E]))
            frac = float(space.weights[E].sum()) / muB
            r = np.array([wE / (frac**d * tail) if tail > 0 else math.inf for d in deltas])
            C = np.maximum(C, r)
            rows.append({"center": b.center, "radius": b.radius, "subset": label,
                         "mu_fraction": frac, "w_E": wE, "tail": tail,
                         **{f"ratio_d{d:g}": float(x) for d, x in zip(deltas, r)}})
    curve = [(d, float(c)) for d, c in zip(deltas, C)]
    passing = [d for d, c in curve if c <= C_max]
    return WeightReport("cp", float(C.max()), rows, {"p": p, "C_max": C_max}, curve,
                        max(passing) if passing else None)


def weight_from_spec(space: PeriodicGrid, spec: dict) -> np.ndarray:
    """Corpus weights: ``constant``, ``power``, ``bump`` and ``left_half``.

    ``bump`` is ``1 + amplitude exp(-(d / width)^2)`` about ``center`` and
    ``left_half`` is ``epsilon`` plus the indicator of ``x_1 < L/2``.
    """
    kind = spec["kind"]
    if kind == "constant":
        return make_test_field(space, "constant", value=spec.get("value", 1.0))
    if kind == "power":
        return make_test_field(space, "power", a=spec["a"], x0=spec.get("x0", 0))
    if kind == "bump":
        c = spec.get("center", [space.period / 2] * space.dim)
        d = space.distances_from(space.index_of(c)).reshape(space.shape)
        return 1.0 + spec.get("amplitude", 0.5) * np.exp(-(d / spec.get("width", 0.1)) ** 2)
    if kind == "left_half":
        return spec.get("epsilon", 0.1) + make_test_field(space, "indicator", region="left_half")
    raise ValueError(f"unknown weight kind {kind!r}")


def class_agreement(spec: dict, cells: Sequence[int] = (512, 1024), dim: int = 1,
                    q_grid: Sequence[float] = (1.1, 1.25, 1.5),
                    p_grid: Sequence[float] = (2.0, 4.0, 8.0),
                    centers_per_axis: int = 16, threshold: float = 0.10) -> dict:
    """Refinement-stability of three class constants for one corpus weight.

    A constant counts as finite when it grows by less than ``threshold``
    between successive resolutions.  Returns the three booleans (very weak
    A-infinity, some reverse Hoelder exponent, some set-function exponent)
    and whether they agree.
    """
    hist: dict = {"vw_ainfty": [], **{f"rh{q:g}": [] for q in q_grid},
                  **{f"cond{p:g}": [] for p in p_grid}}
    for M in cells:
        sp = PeriodicGrid(dim, M)
        w = weight_from_spec(sp, spec)
        fam = ball_family(sp, centers_per_axis=centers_per_axis)
        hist["vw_ainfty"].append(vw_ainfty_constant(sp, w, fam).constant)
        for q in q_grid:
            hist[f"rh{q:g}"].append(vw_rh_constant(sp, w, fam, q).constant)
        for p in p_grid:
            hist[f"cond{p:g}"].append(vw_ainfty_condition(sp, w, fam, p=p).constant)

    def stable(v):
        v = np.asarray(v)
        return bool(np.all(np.isfinite(v)) and np.all(v[1:] / v[:-1] < 1 + threshold))

    a = stable(hist["vw_ainfty"])
    rh = any(stable(hist[f"rh{q:g}"]) for q in q_grid)
    cond = any(stable(hist[f"cond{p:g}"]) for p in p_grid)
    return {"weight": spec, "constants": hist, "vw_ainfty": a, "rh_some_q": rh,
            "condition_some_p": cond, "agree": a == rh == cond}
