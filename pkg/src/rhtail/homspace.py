"""Discrete spaces of homogeneous type.

Two concrete spaces are provided: :class:`PeriodicGrid`, a uniform grid on the
flat torus ``[0, L)^n`` with the counting measure scaled by the cell volume,
and :class:`PointCloud`, a finite set of weighted points carrying an arbitrary
symmetric quasi-distance.  Balls are open, ``B(x, r) = {y : d(x, y) < r}``, and
are always centred at a sample point.

Both spaces expose the same small interface used by the rest of the package:
``neighbors(center)`` returns all points sorted by distance from ``center``,
from which ball membership, averages at every radius and volume ratios follow
with prefix sums.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyBall, IntegrabilityWarning

# Exhaustive quasi-triangle search up to this many points, sampling above.
EXHAUSTIVE_LIMIT = 500
SAMPLED_TRIPLES = 100_000


class Ball:
    """Open ball ``B(center, radius)`` with ``center`` a flat point index.

    A ball whose radius is infinite is the whole space; all such balls compare
    equal regardless of their nominal centre.
    """

    __slots__ = ("center", "radius")

    def __init__(self, center: int, radius: float):
        if not radius > 0:
            raise ValueError(f"ball radius must be positive, got {radius}")
        self.center = int(center)
        self.radius = float(radius)

    @property
    def is_full(self) -> bool:
        return math.isinf(self.radius)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def __eq__(self, other):
        if not isinstance(other, Ball):
            return NotImplemented
        if self.is_full and other.is_full:
            return True
        return self.center == other.center and self.radius == other.radius

    def __hash__(self):
        return hash(("full",)) if self.is_full else hash((self.center, self.radius))

    def __repr__(self):
        return f"Ball(center={self.center}, radius={self.radius!r})"


class Space:
    """Common behaviour of the discrete spaces."""

    weights: np.ndarray
    n_points: int
    diameter: float
    quasi_constant: float

    def neighbors(self, center: int) -> tuple[np.ndarray, np.ndarray]:
        """Point indices sorted by distance from ``center`` and those distances."""
        raise NotImplementedError

    def distances_from(self, center: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    def flat(self, u) -> np.ndarray:
        """View a scalar field as a flat array over the sample points."""
        u = np.asarray(u)
        if u.size != self.n_points:
            raise ValueError(f"field has {u.size} samples, space has {self.n_points}")
        return u.reshape(self.n_points)

    def saturated(self, ball: Ball) -> Ball:
        """Return the whole-space ball if ``ball`` already covers every point."""
        if ball.radius > self.diameter:
            return Ball(ball.center, math.inf)
        return ball

    def dilate(self, ball: Ball, factor: float) -> Ball:
        return self.saturated(ball.scaled(factor))

    def members(self, ball: Ball) -> np.ndarray:
        idx, d = self.neighbors(ball.center)
        return idx[: np.searchsorted(d, ball.radius, side="left")]

    def measure(self, ball: Ball) -> float:
        return float(self.weights[self.members(ball)].sum())

    def global_mean(self, u) -> float:
        u = self.flat(u)
        return float(np.dot(u, self.weights) / self.total_measure)

    def contains(self, outer: Ball, inner: Ball) -> bool:
        """Set containment of the sample sets of two balls."""
        a = set(self.members(inner).tolist())
        return a <= set(self.members(outer).tolist())

    def max_volume_ratio(self, lam: float) -> float:
        """Exact ``sup_{x, r} mu(B(x, lam r)) / mu(B(x, r))`` over sample centres."""
        return max(self._volume_ratio_at(c, lam) for c in self._ratio_centers())

    def doubling_constant(self) -> float:
        return self.max_volume_ratio(2.0)

    def _ratio_centers(self) -> Iterable[int]:
        return range(self.n_points)

    def _volume_ratio_at(self, center: int, lam: float) -> float:
        idx, d = self.neighbors(center)
        cw = np.cumsum(self.weights[idx])
        # For r in (v_i, v_{i+1}] the ball B(r) is fixed and B(lam r) is largest
        # at the right end of the interval.
        last = np.flatnonzero(np.r_[d[1:] != d[:-1], True])
        vals = d[last]
        inner = cw[last[:-1]]
        outer_count = np.searchsorted(d, lam * vals[1:], side="left")
        outer = cw[outer_count - 1]
        if inner.size == 0:
            return 1.0
        return float(max(1.0, np.max(outer / inner)))

    @property
    def homogeneous_dimension(self) -> float:
        return math.log2(self.doubling_constant())


class PeriodicGrid(Space):
    """Uniform grid with ``cells`` points per axis on the torus ``[0, period)^dim``.

    Points are ``x_j = j * h`` with ``h = period / cells``; each carries the
    measure ``h**dim``.  Distances are Euclidean on the torus.
    """

    quasi_constant = 1.0

    def __init__(self, dim: int, cells: int, period: float = 1.0):
        if dim < 1 or cells < 2:
            raise ValueError("need dim >= 1 and cells >= 2")
        self.dim = int(dim)
        self.cells = int(cells)
        self.period = float(period)
        self.spacing = self.period / self.cells
        self.shape = (self.cells,) * self.dim
        self.n_points = self.cells**self.dim
        self.cell_measure = self.spacing**self.dim
        self.weights = np.full(self.n_points, self.cell_measure)
        wrap = np.minimum(np.arange(self.cells), self.cells - np.arange(self.cells))
        axes = np.meshgrid(*([wrap * self.spacing] * self.dim), indexing="ij")
        self._offset_dist = np.sqrt(sum(a**2 for a in axes)).ravel()
        order = np.argsort(self._offset_dist, kind="stable")
        self._sorted_d = self._offset_dist[order]
        self._sorted_off = np.stack(np.unravel_index(order, self.shape), axis=1)
        self.diameter = float(self._sorted_d[-1])

    @property
    def homogeneous_dimension(self) -> float:
        return float(self.dim)

    @property
    def points(self) -> np.ndarray:
        """Coordinates of all sample points, shape ``(n_points, dim)``."""
        idx = np.stack(np.unravel_index(np.arange(self.n_points), self.shape), axis=1)
        return idx * self.spacing

    def index_of(self, coords: Sequence[float]) -> int:
        """Flat index of the grid point nearest to ``coords``."""
        j = np.round(np.asarray(coords, dtype=float) / self.spacing).astype(int) % self.cells
        return int(np.ravel_multi_index(tuple(j), self.shape))

    def neighbors(self, center: int) -> tuple[np.ndarray, np.ndarray]:
        c = np.array(np.unravel_index(int(center), self.shape))
        shifted = (self._sorted_off + c) % self.cells
        return np.ravel_multi_index(tuple(shifted.T), self.shape), self._sorted_d

    def distances_from(self, center: int) -> np.ndarray:
        c = np.unravel_index(int(center), self.shape)
        d = self._offset_dist.reshape(self.shape)
        return np.roll(d, shift=c, axis=tuple(range(self.dim))).ravel()

    def offsets_within(self, radius: float) -> np.ndarray:
        """Integer offsets ``o`` (one per torus class) with ``|o h| < radius``."""
        count = np.searchsorted(self._sorted_d, radius, side="left")
        off = self._sorted_off[:count]
        return np.where(off > self.cells // 2, off - self.cells, off)

    def _ratio_centers(self):
        return (0,)

    def __repr__(self):
        return f"PeriodicGrid(dim={self.dim}, cells={self.cells}, period={self.period})"


class PointCloud(Space):
    """Finite weighted point set with a symmetric quasi-distance.

    Parameters
    ----------
    points : array_like, shape (n, k)
        Coordinates, only used to evaluate ``quasidist``.
    weights : array_like, optional
        Positive point masses; defaults to ones.
    quasidist : callable, optional
        ``quasidist(x, y)`` for two coordinate vectors.  Euclidean by default.
    distance_matrix : array_like, optional
        Precomputed distances; overrides ``quasidist``.
    quasi_constant : float, optional
        Declared constant ``K``.  When omitted it is computed from the data
        (exhaustively up to 500 points, otherwise from sampled triples).
    """

    def __init__(self, points=None, weights=None, quasidist: Callable | None = None,
                 distance_matrix=None, quasi_constant: float | None = None, seed: int = 0):
        if distance_matrix is None:
            pts = np.asarray(points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            n = pts.shape[0]
            if quasidist is None:
                diff = pts[:, None, :] - pts[None, :, :]
                D = np.sqrt(np.sum(diff**2, axis=-1))
            else:
                D = np.zeros((n, n))
                for i in range(n):
                    for j in range(i + 1, n):
                        D[i, j] = D[j, i] = float(quasidist(pts[i], pts[j]))
            self.points = pts
        else:
            D = np.array(distance_matrix, dtype=float)
            self.points = None if points is None else np.asarray(points, dtype=float)
        n = D.shape[0]
        if D.shape != (n, n):
            raise ValueError("distance matrix must be square")
        if not np.array_equal(D, D.T):
            raise ValueError("quasi-distance must be symmetric")
        if np.any(np.diag(D) != 0):
            raise ValueError("quasi-distance must vanish on the diagonal")
        off = D[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise ValueError("distinct points must have positive distance (duplicate points?)")
        self.D = D
        self.n_points = n
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        if self.weights.shape != (n,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per point")
        self.diameter = float(D.max())
        self._order = np.argsort(D, axis=1, kind="stable")
        self._sorted = np.take_along_axis(D, self._order, axis=1)
        if quasi_constant is None:
            self.quasi_constant, self.quasi_constant_method = estimate_quasi_constant(D, seed)
        else:
            if quasi_constant < 1:
                raise ValueError("quasi-triangle constant must be >= 1")
            self.quasi_constant, self.quasi_constant_method = float(quasi_constant), "declared"

    def neighbors(self, center: int):
        return self._order[center], self._sorted[center]

    def distances_from(self, center: int) -> np.ndarray:
        return self.D[center]


def estimate_quasi_constant(D: np.ndarray, seed: int = 0) -> tuple[float, str]:
    """Largest ``d(x, z) / (d(x, y) + d(y, z))`` over triples of points.

    Exhaustive for at most 500 points; otherwise 100000 seeded random triples.
    Returns the constant and the method tag.
    """
    n = D.shape[0]
    if n <= EXHAUSTIVE_LIMIT:
        best = 1.0
        for y in range(n):
            den = D[:, y][:, None] + D[y, :][None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(den > 0, D / den, 0.0)
            best = max(best, float(r.max()))
        return best, "exhaustive"
    rng = np.random.default_rng(seed)
    x, y, z = rng.integers(n, size=(3, SAMPLED_TRIPLES))
    den = D[x, y] + D[y, z]
    ok = den > 0
    r = D[x, z][ok] / den[ok]
    return float(max(1.0, r.max(initial=1.0))), "sampled"


def ball_average(space: Space, u, ball: Ball) -> float:
    """Average of ``u`` over ``ball`` with respect to the space measure.

    Raises
    ------
    EmptyBall
        If no sample point lies strictly within the radius.
    """
    u = space.flat(u)
    idx = space.members(ball)
    if idx.size == 0:
        raise EmptyBall(f"{ball} contains no sample points")
    w = space.weights[idx]
    return float(np.dot(u[idx], w) / w.sum())


class RadialAverager:
    """Averages of one or several fields over all balls about a fixed centre.

    Prefix sums along the distance-sorted neighbour list make each query a
    binary search.  ``values`` may be ``(n_points,)`` or ``(n_points, k)``.
    """

    def __init__(self, space: Space, values, center: int):
        v = np.asarray(values, dtype=float)
        v = v.reshape(space.n_points, -1)
        idx, d = space.neighbors(center)
        w = space.weights[idx]
        self.space = space
        self.center = center
        self.dist = d
        self.cum_w = np.cumsum(w)
        self.cum_v = np.cumsum(v[idx] * w[:, None], axis=0)
        self.squeeze = np.ndim(values) == 1

    def count(self, radius) -> np.ndarray:
        return np.searchsorted(self.dist, radius, side="left")

    def measure(self, radius) -> np.ndarray:
        c = self.count(radius)
        return np.where(c > 0, self.cum_w[np.maximum(c, 1) - 1], 0.0)

    def integral(self, radius):
        """Integral of the field(s) over ``B(center, radius)``."""
        c = np.atleast_1d(self.count(radius))
        out = np.where((c > 0)[:, None], self.cum_v[np.maximum(c, 1) - 1], 0.0)
        if np.ndim(radius) == 0:
            out = out[0]
        return out[..., 0] if self.squeeze else out

    def average(self, radius):
        c = np.atleast_1d(self.count(radius))
        if np.any(c == 0):
            raise EmptyBall(f"ball about point {self.center} with radius {radius} is empty")
        out = self.cum_v[c - 1] / self.cum_w[c - 1][:, None]
        if np.ndim(radius) == 0:
            out = out[0]
        return out[..., 0] if self.squeeze else out

    def shell_averages(self, r_lo: float, r_hi: float):
        """Every distinct ball average for radii in ``[r_lo, r_hi)``.

        The average only changes when the radius crosses a point distance, so
        these are exactly the averages ``avg(B(center, t))`` for all real
        ``t`` in the range.
        """
        c0 = int(self.count(r_lo))
        if c0 == 0:
            raise EmptyBall(f"ball about point {self.center} with radius {r_lo} is empty")
        d = self.dist
        ends = np.flatnonzero(np.r_[d[1:] != d[:-1], True])
        sel = ends[(d[ends] >= r_lo) & (d[ends] < r_hi)]
        # t just above d[end] captures every point up to and including the group
        counts = np.unique(np.r_[c0, sel + 1])
        out = self.cum_v[counts - 1] / self.cum_w[counts - 1][:, None]
        return out[:, 0] if self.squeeze else out


@dataclass(frozen=True)
class DoublingProfile:
    """Empirical doubling data: ``C_d`` and the dimension ``log2 C_d``."""

    constant: float
    dimension: float
    ratios: tuple


def doubling_profile(space: Space, samples: Iterable[tuple[int, float]]) -> DoublingProfile:
    """Measured doubling constant ``max mu(2B) / mu(B)`` over sample balls."""
    ratios = []
    for center, r in samples:
        inner = space.measure(Ball(center, r))
        if inner == 0:
            raise EmptyBall(f"ball about {center} with radius {r} is empty")
        ratios.append(space.measure(Ball(center, 2 * r)) / inner)
    if not ratios:
        raise ValueError("doubling profile needs at least one sample ball")
    c = max(ratios)
    return DoublingProfile(c, math.log2(c), tuple(ratios))


@dataclass(frozen=True)
class ChainMetric:
    """Result of metrization: the new distance matrix and the fit quality."""

    metric: np.ndarray
    delta: float
    defect: float
    quasi_constant: float

    def satisfies_triangle(self, atol: float = 1e-12) -> bool:
        return triangle_violations(self.metric, atol) == 0


def triangle_violations(D: np.ndarray, atol: float = 1e-12) -> int:
    """Number of ordered triples with ``D[x, z] > D[x, y] + D[y, z] (1 + atol)``."""
    bad = 0
    for y in range(D.shape[0]):
        bound = D[:, y][:, None] + D[y, :][None, :]
        bad += int(np.count_nonzero(D > bound * (1 + atol) + atol))
    return bad


def chain_metric(space: PointCloud) -> ChainMetric:
    """Metrize a quasi-distance by shortest chains of ``rho**delta``.

    With ``delta = ln 2 / ln(2K)`` the power ``rho**delta`` is comparable to its
    chain (shortest path) distance, which is a metric; ``rho~`` is that metric
    raised back to ``1 / delta``.  The achieved two-sided comparability factor
    is reported as ``defect``.
    """
    K = space.quasi_constant
    if K < 1:
        raise ValueError("quasi-triangle constant must be >= 1")
    delta = 1.0 if K == 1 else math.log(2) / math.log(2 * K)
    W = space.D**delta
    for k in range(W.shape[0]):
        np.minimum(W, W[:, k, None] + W[None, k, :], out=W)
    rt = W ** (1.0 / delta)
    off = ~np.eye(W.shape[0], dtype=bool)
    r1 = space.D[off] / rt[off]
    defect = float(max(r1.max(initial=1.0), (1.0 / r1).max(initial=1.0)))
    return ChainMetric(rt, delta, defect, K)


def vitali_cover(space: Space, balls: Sequence[Ball], dilation_factor: float = 5.0) -> list[int]:
    """Greedy disjoint subfamily, largest radius first.

    A ball is kept unless its sample set meets one already kept.  Returns the
    positions of the kept balls in ``balls``, in selection order.  The union
    of the kept balls dilated by ``dilation_factor`` covers every input ball
    once the factor is at least ``max(5, K (1 + 2K))``.
    """
    K = space.quasi_constant
    need = max(5.0, K * (1 + 2 * K))
    if dilation_factor < need:
        raise ValueError(f"dilation factor {dilation_factor} below {need} for K={K}")
    order = sorted(range(len(balls)), key=lambda i: -balls[i].radius)
    taken = np.zeros(space.n_points, dtype=bool)
    kept = []
    for i in order:
        m = space.members(balls[i])
        if not taken[m].any():
            kept.append(i)
            taken[m] = True
    return kept


def cover_holds(space: Space, balls: Sequence[Ball], kept: Sequence[int],
                dilation_factor: float = 5.0) -> tuple[bool, bool]:
    """Check disjointness of ``kept`` and coverage of all balls by their dilates."""
    seen = np.zeros(space.n_points, dtype=int)
    for i in kept:
        seen[space.members(balls[i])] += 1
    disjoint = bool(seen.max(initial=0) <= 1)
    covered = np.zeros(space.n_points, dtype=bool)
    for i in kept:
        covered[space.members(balls[i].scaled(dilation_factor))] = True
    union = np.zeros(space.n_points, dtype=bool)
    for b in balls:
        union[space.members(b)] = True
    return disjoint, bool(np.all(covered[union]))


def ball_family(space: Space, centers_per_axis: int | None = None, base: float = 2.0,
                r_min: float | None = None, r_max: float | None = None) -> list[Ball]:
    """Lattice family: centres on a coarsened sublattice, ``base``-adic radii.

    Defaults are 16 centres per axis on grids (every point on clouds), radii
    from four grid spacings (four nearest-neighbour distances) up to half
    the diameter.
    """
    if isinstance(space, PeriodicGrid):
        k = min(space.cells, centers_per_axis or 16)
        ax = np.unique(np.round(np.linspace(0, space.cells, k, endpoint=False)).astype(int))
        mesh = np.meshgrid(*([ax] * space.dim), indexing="ij")
        centers = np.ravel_multi_index(tuple(m.ravel() for m in mesh), space.shape)
        step = space.spacing
    else:
        centers = np.arange(space.n_points)
        step = float(np.median(space._sorted[:, 1]))
    r_min = 4 * step if r_min is None else r_min
    r_max = space.diameter / 2 if r_max is None else r_max
    radii = []
    r = r_min
    while r <= r_max * (1 + 1e-12):
        radii.append(r)
        r *= base
    return [Ball(int(c), float(r)) for c in centers for r in radii]


def random_ball_family(space: Space, count: int, seed: int = 0, r_min: float | None = None,
                       r_max: float | None = None) -> list[Ball]:
    """Seeded random balls with log-uniform radii.

    The first ``k`` balls do not depend on ``count``, so a larger family is an
    enlargement of a smaller one drawn with the same seed.
    """
    step = space.spacing if isinstance(space, PeriodicGrid) else float(np.median(space._sorted[:, 1]))
    r_min = 4 * step if r_min is None else r_min
    r_max = space.diameter / 2 if r_max is None else r_max
    draws = np.random.default_rng(seed).random((count, 2))
    centers = np.minimum((draws[:, 0] * space.n_points).astype(int), space.n_points - 1)
    radii = np.exp(math.log(r_min) + draws[:, 1] * (math.log(r_max) - math.log(r_min)))
    return [Ball(int(c), float(r)) for c, r in zip(centers, radii)]


def make_test_field(space: Space, kind: str, **params) -> np.ndarray:
    """Build a scalar test field on ``space``.

    Kinds
    -----
    ``constant``
        ``value`` (default 1).
    ``power``
        ``|x - x0|**(-a)``; the sample at ``x0`` takes the value one grid
        step away.  ``a >= dim`` is allowed but warns, since the continuum
        function is then not locally integrable.
    ``indicator``
        One on ``region`` and zero elsewhere.  ``region`` is a predicate on
        the coordinate array or the name ``"left_half"``.
    ``bandlimited``
        Seeded random real trigonometric polynomial with frequencies
        ``0 < |k|_inf <= kmax`` and unit root-mean-square.

    Returns an array shaped like the grid (flat for point clouds).
    """
    shape = space.shape if isinstance(space, PeriodicGrid) else (space.n_points,)
    if kind == "constant":
        return np.full(shape, float(params.get("value", 1.0)))
    if kind == "power":
        a = float(params["a"])
        dim = space.dim if isinstance(space, PeriodicGrid) else space.homogeneous_dimension
        if a >= dim:
            warnings.warn(f"|x|^-{a} is not locally integrable in dimension {dim}",
                          IntegrabilityWarning, stacklevel=2)
        x0 = params.get("x0", 0)
        if not np.isscalar(x0):
            x0 = space.index_of(x0)
        d = np.array(space.distances_from(int(x0)), dtype=float)
        step = space.spacing if isinstance(space, PeriodicGrid) else float(np.min(d[d > 0]))
        d[int(x0)] = step
        return (d**-a).reshape(shape)
    if kind == "indicator":
        region = params["region"]
        pts = space.points
        if region == "left_half":
            mask = pts[:, 0] < space.period / 2
        else:
            mask = np.asarray(region(pts), dtype=bool)
        return mask.astype(float).reshape(shape)
    if kind == "bandlimited":
        if not isinstance(space, PeriodicGrid):
            raise ValueError("band-limited fields need a periodic grid")
        kmax = int(params.get("kmax", space.cells // 3))
        rng = np.random.default_rng(params.get("seed", 0))
        k = np.fft.fftfreq(space.cells, 1.0 / space.cells)
        kk = np.meshgrid(*([np.abs(k)] * space.dim), indexing="ij")
        band = np.max(np.stack(kk), axis=0)
        coef = rng.standard_normal(space.shape) + 1j * rng.standard_normal(space.shape)
        coef[(band > kmax) | (band == 0)] = 0
        u = np.real(np.fft.ifftn(coef))
        return u / np.sqrt(np.mean(u**2))
    raise ValueError(f"unknown field kind {kind!r}")


def load_point_cloud_csv(path, quasidist: Callable | None = None, **kwargs) -> PointCloud:
    """Read ``coord_1, ..., coord_k, weight`` rows (an optional header is skipped)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                rows.append([float(x) for x in rec])
            except ValueError:
                if rows:
                    raise
    arr = np.array(rows)
    return PointCloud(arr[:, :-1], weights=arr[:, -1], quasidist=quasidist, **kwargs)


def save_field_csv(path, space: Space, u) -> None:
    """Write ``coords..., value`` rows for a scalar field."""
    u = space.flat(u)
    pts = space.points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(pts.shape[1])] + ["value"])
        for p, v in zip(pts, u):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def load_field_csv(path, space: Space) -> np.ndarray:
    """Read a field written by :func:`save_field_csv` (rows in point order)."""
    with open(path, newline="") as fh:
        rec = list(csv.reader(fh))
    vals = np.array([float(r[-1]) for r in rec[1:]])
    shape = space.shape if isinstance(space, PeriodicGrid) else (space.n_points,)
    return vals.reshape(shape)
