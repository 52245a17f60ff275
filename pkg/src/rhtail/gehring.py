"""Reverse Hoelder inequalities with tails: measured constants and gains.

Given ``u, f, h >= 0`` on a discrete space, :func:`hypothesis_constant`
measures the smallest ``A`` with

    (avg_B u^q)^(1/q) <= A a_u(B) + a_{f^q}(B)^(1/q) + R^beta a_{h^s}(B)^(1/s)

over a family of balls, :func:`conclusion_check` measures the constant of the
improved inequality at an exponent ``p > q`` (tails over ``N B`` plus plain
averages of ``f`` and ``h`` at the higher exponent), and :func:`estimate_gain`
scans ``p`` to locate the largest exponent whose constant stays below a cap.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonNegativityViolated, ParameterRangeWarning
from .homspace import Ball, PeriodicGrid, RadialAverager, Space, ball_family
from .tails import SeqTriple, TailWeights, convolution_conditions, tail_from_averager

VARIANTS = ("radius_power", "volume_lower_bound", "volume_power")


@dataclass
class RHInstance:
    """Fields and exponents of a reverse Hoelder inequality with tails.

    ``variant`` selects the factor on the ``h`` term: ``R**beta``
    (``radius_power``), ``R**beta`` with a volume lower bound of exponent ``Q``
    (``volume_lower_bound``), or ``mu(B)**gamma`` (``volume_power``).
    Exponents outside the proven range only produce warnings, collected in
    ``warnings``; the conditions on ``beta`` and ``gamma`` are skipped when
    ``h`` vanishes.
    """

    space: Space
    u: np.ndarray
    q: float
    s: float
    tw: TailWeights
    f: np.ndarray | None = None
    h: np.ndarray | None = None
    beta: float = 0.0
    variant: str = "radius_power"
    Q: float | None = None
    gamma: float = 0.0
    dimension: float | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        sp = self.space
        self.u = np.asarray(sp.flat(self.u), dtype=float)
        self.f = np.zeros(sp.n_points) if self.f is None else np.asarray(sp.flat(self.f), dtype=float)
        self.h = np.zeros(sp.n_points) if self.h is None else np.asarray(sp.flat(self.h), dtype=float)
        for name in ("u", "f", "h"):
            if np.any(getattr(self, name) < 0):
                raise NonNegativityViolated(f"{name} must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.q > 1 or not self.s > 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("need q > 1, s > 0, beta >= 0 and gamma >= 0")
        if self.variant == "volume_lower_bound" and self.Q is None:
            self.Q = float(getattr(sp, "dim", sp.homogeneous_dimension))
        if self.dimension is None:
            self.dimension = sp.homogeneous_dimension
        gap = 1 / self.s - 1 / self.q
        tol = 1e-12
        if self.s > self.q:
            self._warn(f"s = {self.s} exceeds q = {self.q}")
        if not np.any(self.h):
            return  # the h term vanishes, so its exponent conditions are void
        if self.variant == "radius_power" and self.beta < self.dimension * gap - tol:
            self._warn(f"beta = {self.beta} below D(1/s - 1/q) = {self.dimension * gap}")
        if self.variant == "volume_lower_bound" and self.beta > self.Q * gap + tol:
            self._warn(f"beta = {self.beta} above Q(1/s - 1/q) = {self.Q * gap}")
        if self.variant == "volume_power" and self.gamma > gap + tol:
            self._warn(f"gamma = {self.gamma} above 1/s - 1/q = {gap}")

    def _warn(self, msg: str) -> None:
        self.warnings.append(msg)
        warnings.warn(msg, ParameterRangeWarning, stacklevel=3)

    def h_factor(self, radius: float, measure: float) -> float:
        """Scale factor of the ``h`` tail in the hypothesis."""
        if self.variant == "volume_power":
            return measure**self.gamma
        return radius**self.beta if self.beta else 1.0

    def h_exponent(self, p: float) -> float:
        """Exponent of the plain ``h`` average in the conclusion at ``p``."""
        if self.variant == "radius_power":
            return p * self.s / self.q
        if self.variant == "volume_lower_bound":
            return p * self.Q / (self.Q + self.beta * p)
        return p / (1 + self.gamma * p)

    def h_plain_factor(self, radius: float, measure: float) -> float:
        if self.variant == "radius_power":
            return radius**self.beta if self.beta else 1.0
        if self.variant == "volume_lower_bound":
            return measure ** (self.beta / self.Q) if self.beta else 1.0
        return measure**self.gamma


@dataclass
class RHReport:
    """Per-ball rows and the resulting constant(s).

    ``constant`` is ``A_best`` for hypothesis reports and ``C_best`` for a
    single conclusion exponent; ``curve`` holds ``(p, C_best(p))`` pairs for
    gain estimates.
    """

    kind: str
    rows: list
    constant: float
    argmax: int
    curve: list = field(default_factory=list)
    p_hat: float | None = None
    eps_hat: float | None = None
    monotone: bool | None = None
    warnings: list = field(default_factory=list)
    family: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"kind": self.kind, "constant": _num(self.constant), "argmax": self.argmax,
               "n_balls": len(self.rows), "warnings": list(self.warnings), "family": self.family}
        if self.curve:
            out["curve"] = [[p, _num(c)] for p, c in self.curve]
            out["p_hat"] = self.p_hat
            out["eps_hat"] = self.eps_hat
            out["monotone"] = self.monotone
        return out

    def write_csv(self, path) -> None:
        if not self.rows:
            return
        keys = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for r in self.rows:
                w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])


def _num(x: float):
    """JSON-safe number (infinities become strings)."""
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


def default_family(inst: RHInstance, centers_per_axis: int | None = None) -> list[Ball]:
    """Lattice centres with radii ``N``-adic from four spacings to half the diameter."""
    return ball_family(inst.space, centers_per_axis=centers_per_axis, base=inst.tw.base)


def describe_family(family: Sequence[Ball]) -> dict:
    radii = sorted({b.radius for b in family})
    return {"n_balls": len(family), "n_centers": len({b.center for b in family}),
            "r_min": radii[0] if radii else None, "r_max": radii[-1] if radii else None}


def _group(family: Sequence[Ball]) -> dict:
    groups: dict = {}
    for i, b in enumerate(family):
        groups.setdefault(b.center, []).append(i)
    return groups


def _argmax(vals: Sequence[float]) -> int:
    """Index of the largest value, lowest index on ties, NaN treated as -inf."""
    arr = np.nan_to_num(np.asarray(vals, dtype=float), nan=-np.inf)
    return int(np.argmax(arr)) if arr.size else -1


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else 0.0


def hypothesis_constant(inst: RHInstance, family: Sequence[Ball]) -> RHReport:
    """Smallest ``A`` making the tail hypothesis hold on every ball of ``family``.

    Per ball, ``A = max(0, lhs - f_term - h_term) / tail_u``; the ``f`` and
    ``h`` terms enter with coefficient one.  A ball with vanishing ``u`` tail
    and positive numerator gives ``A = inf``.
    """
    if not family:
        raise ValueError("ball family is empty")
    sp, q, s = inst.space, inst.q, inst.s
    F = np.stack([inst.u, inst.u**q, inst.f**q, inst.h**s], axis=1)
    gmean = F.T @ sp.weights / sp.total_measure
    rows: list = [None] * len(family)
    for c, members in _group(family).items():
        avg = RadialAverager(sp, F, c)
        for i in members:
            r = family[i].radius
            tails = tail_from_averager(avg, r, inst.tw, gmean)
            lhs = float(avg.average(r)[1]) ** (1 / q)
            mu = float(avg.measure(r))
            f_term = float(tails[2]) ** (1 / q)
            h_term = inst.h_factor(r, mu) * float(tails[3]) ** (1 / s)
            num = max(0.0, lhs - f_term - h_term)
            rows[i] = {"center": c, "radius": r, "lhs": lhs, "tail_u": float(tails[0]),
                       "tail_f": f_term, "tail_h": h_term, "ratio": _ratio(num, float(tails[0]))}
    ratios = [r["ratio"] for r in rows]
    k = _argmax(ratios)
    return RHReport("hypothesis", rows, float(ratios[k]), k, warnings=list(inst.warnings),
                    family=describe_family(family))


def _conclusion_table(inst: RHInstance, family: Sequence[Ball], ps: Sequence[float]):
    """Per-ball LHS and RHS of the conclusion for each exponent in ``ps``."""
    sp, q, s, N = inst.space, inst.q, inst.s, inst.tw.base
    base = [inst.u, inst.f**q, inst.h**s]
    extra = []
    for p in ps:
        extra += [inst.u**p, inst.f**p, inst.h ** inst.h_exponent(p)]
    F = np.stack(base + extra, axis=1)
    gmean = F.T @ sp.weights / sp.total_measure
    lhs = np.zeros((len(family), len(ps)))
    rhs = np.zeros((len(family), len(ps)))
    tails_out = np.zeros((len(family), 3))
    for c, members in _group(family).items():
        avg = RadialAverager(sp, F, c)
        for i in members:
            r = family[i].radius
            mu = float(avg.measure(r))
            rN = N * r
            tails = tail_from_averager(avg, rN, inst.tw, gmean)
            on_b = avg.average(r)
            on_nb = gmean if rN > sp.diameter else avg.average(rN)
            t1 = float(tails[0])
            t2 = float(tails[1]) ** (1 / q)
            t3 = inst.h_factor(r, mu) * float(tails[2]) ** (1 / s)
            tails_out[i] = (t1, t2, t3)
            for j, p in enumerate(ps):
                e = inst.h_exponent(p)
                lhs[i, j] = on_b[3 + 3 * j] ** (1 / p)
                t4 = on_nb[4 + 3 * j] ** (1 / p)
                t5 = inst.h_plain_factor(r, mu) * on_nb[5 + 3 * j] ** (1 / e)
                rhs[i, j] = t1 + t2 + t3 + t4 + t5
    return lhs, rhs, tails_out


def conclusion_check(inst: RHInstance, family: Sequence[Ball], p: float) -> RHReport:
    """Constant of the improved inequality at exponent ``p > q``.

    The right-hand side is ``a_u(NB) + a_{f^q}(NB)^(1/q) + h-tail(NB)`` plus
    ``(avg_{NB} f^p)^(1/p)`` and the variant's plain ``h`` average on ``NB``.
    """
    if not p > inst.q:
        raise ValueError(f"conclusion exponent p = {p} must exceed q = {inst.q}")
    if not family:
        raise ValueError("ball family is empty")
    lhs, rhs, tails = _conclusion_table(inst, family, [p])
    rows = []
    for i, b in enumerate(family):
        rows.append({"center": b.center, "radius": b.radius, "lhs": float(lhs[i, 0]),
                     "tail_u": float(tails[i, 0]), "tail_f": float(tails[i, 1]),
                     "tail_h": float(tails[i, 2]), "rhs": float(rhs[i, 0]),
                     "ratio": _ratio(float(lhs[i, 0]), float(rhs[i, 0]))})
    ratios = [r["ratio"] for r in rows]
    k = _argmax(ratios)
    return RHReport("conclusion", rows, float(ratios[k]), k, warnings=list(inst.warnings),
                    family=describe_family(family))


def estimate_gain(inst: RHInstance, family: Sequence[Ball], p_grid: Sequence[float],
                  C_max: float) -> RHReport:
    """Scan ``p_grid`` and report the largest ``p`` with ``C_best(p) <= C_max``.

    The full ``(p, C_best)`` curve is returned; ``p_hat`` is ``None`` when no
    grid exponent passes.  ``monotone`` records whether the curve is
    non-decreasing in ``p``.
    """
    ps = [float(p) for p in p_grid]
    if not ps or any(b <= a for a, b in zip(ps, ps[1:])) or ps[0] <= inst.q:
        raise ValueError("p_grid must be increasing with every entry above q")
    lhs, rhs, _ = _conclusion_table(inst, family, ps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    C = ratio.max(axis=0)
    curve = [(p, float(c)) for p, c in zip(ps, C)]
    passing = [p for p, c in curve if c <= C_max]
    p_hat = max(passing) if passing else None
    k = int(np.argmax(C))
    rows = [{"center": b.center, "radius": b.radius,
             **{f"ratio_p{p:g}": float(ratio[i, j]) for j, p in enumerate(ps)}}
            for i, b in enumerate(family)]
    return RHReport("gain", rows, float(C[k]), _argmax(ratio[:, k]), curve=curve, p_hat=p_hat,
                    eps_hat=None if p_hat is None else p_hat - inst.q,
                    monotone=bool(np.all(np.diff(C) >= -1e-12 * np.abs(C[1:]))),
                    warnings=list(inst.warnings), family=describe_family(family))


def refinement_growth(values: Sequence[float], threshold: float = 0.10) -> dict:
    """Growth factors between successive refinements and a stability flag.

    ``stable`` holds when every successive ratio stays below
    ``1 + threshold``.  ``exponent`` is the least-squares slope of
    ``log2(value)`` against the refinement level.
    """
    v = np.asarray(values, dtype=float)
    growth = v[1:] / v[:-1]
    slope = float(np.polyfit(np.arange(v.size), np.log2(v), 1)[0]) if v.size > 1 else 0.0
    return {"values": v.tolist(), "growth": growth.tolist(),
            "stable": bool(np.all(growth < 1 + threshold)), "exponent": slope}


def _norm(space: Space, g: np.ndarray, t: float) -> float:
    return float(np.dot(np.abs(g) ** t, space.weights)) ** (1 / t)


def global_check(inst: RHInstance, p: float, form: str = "phi_regular") -> dict:
    """Both sides of a global higher-integrability bound.

    ``phi_regular``: ``|u|_p`` against ``|u|_q + |f|_p + |h|_{ps/q}``.
    ``volume_lower_bound``: ``|u|_p`` against ``|f|_p + |h|_{p*}`` with
    ``p* = pQ / (Q + beta p)``.
    """
    sp = inst.space
    lhs = _norm(sp, inst.u, p)
    if form == "phi_regular":
        parts = {"u_q": _norm(sp, inst.u, inst.q), "f_p": _norm(sp, inst.f, p),
                 "h": _norm(sp, inst.h, p * inst.s / inst.q)}
    elif form == "volume_lower_bound":
        Q = inst.Q if inst.Q is not None else float(getattr(sp, "dim", sp.homogeneous_dimension))
        pstar = p * Q / (Q + inst.beta * p)
        parts = {"f_p": _norm(sp, inst.f, p), "h": _norm(sp, inst.h, pstar)}
    else:
        raise ValueError(f"unknown global form {form!r}")
    rhs = sum(parts.values())
    out = {"form": form, "p": p, "lhs": lhs, "rhs": rhs, "parts": parts, "ratio": _ratio(lhs, rhs)}
    if isinstance(sp, PeriodicGrid):
        out["volume_profile"] = f"min(r, {sp.diameter!r})^{sp.dim}"
    return out


def rhs_exponent_check(inst: RHInstance, family: Sequence[Ball], p: float, s0: float, s1: float,
                       s2: float, triple: SeqTriple, m_max: int | None = None) -> dict:
    """Compare the original and the lowered-exponent right-hand sides.

    Original: ``(avg_B u^p)^(1/p)`` against ``a_{u^q}(B)^(1/q) + b(B)`` with
    ``b = a_{f^s1}^(1/s1) + r^beta a_{h^s2}^(1/s2)``.  Improved: the same with
    ``a~_{u^s0}(B)^(1/s0) + b~(B)``, where ``b~`` uses ``alpha~``.  The
    three convolution ratios of ``triple`` must be bounded; otherwise a
    ``ValueError`` carries the diagnostic.
    """
    q = inst.q
    if not p > q:
        raise ValueError("need p > q")
    for v in (s0, s1, s2):
        if not 0 < v <= q:
            raise ValueError("exponents s0, s1, s2 must lie in (0, q]")
    N = inst.tw.base
    m_max = m_max or min(triple.alpha.size, triple.alpha_tilde.size, triple.alpha_sharp.size) - 1
    conv = convolution_conditions(triple, s2, q, N, inst.beta, m_max)
    if not conv.ok:
        bad = [k for k, ok in conv.bounded.items() if not ok]
        raise ValueError(f"convolution ratios unbounded for {bad}; maxima {conv.maxima}")
    a = TailWeights.explicit(triple.alpha, base=N)
    at = TailWeights.explicit(triple.alpha_tilde, base=N)
    sp = inst.space
    F = np.stack([inst.u**p, inst.u**q, inst.f**s1, inst.h**s2, inst.u**s0], axis=1)
    gmean = F.T @ sp.weights / sp.total_measure
    rows = []
    for c, members in _group(family).items():
        avg = RadialAverager(sp, F, c)
        for i in members:
            r = family[i].radius
            lhs = float(avg.average(r)[0]) ** (1 / p)
            to = tail_from_averager(avg, r, a, gmean)
            ti = tail_from_averager(avg, r, at, gmean)
            rb = r**inst.beta if inst.beta else 1.0
            orig = to[1] ** (1 / q) + to[2] ** (1 / s1) + rb * to[3] ** (1 / s2)
            impr = ti[4] ** (1 / s0) + ti[2] ** (1 / s1) + rb * ti[3] ** (1 / s2)
            rows.append((i, {"center": c, "radius": r, "lhs": lhs, "rhs_original": float(orig),
                             "rhs_improved": float(impr),
                             "ratio_original": _ratio(lhs, float(orig)),
                             "ratio_improved": _ratio(lhs, float(impr))}))
    rows = [r for _, r in sorted(rows, key=lambda t: t[0])]
    K0 = max(r["ratio_original"] for r in rows)
    K1 = max(r["ratio_improved"] for r in rows)
    return {"original_constant": K0, "improved_constant": K1, "ratio": _ratio(K1, K0),
            "convolution_maxima": conv.maxima, "tau": triple.tau, "rows": rows,
            "family": describe_family(family)}
