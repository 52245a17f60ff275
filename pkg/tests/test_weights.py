import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhtail.errors import NonNegativityViolated
from rhtail.homspace import Ball, PeriodicGrid, ball_family, make_test_field
from rhtail.tails import maximal_comparability
from rhtail.weights import (SubsetSampler, class_agreement, cp_check, cp_tail, vw_ainfty_condition,
                            vw_ainfty_constant, vw_improvement, vw_rh_constant, weight_from_spec)

import oracles


@pytest.fixture(scope="module")
def grid():
    sp = PeriodicGrid(1, 256)
    return sp, ball_family(sp, centers_per_axis=8)


def test_constant_weight_all_classes_one(grid):
    sp, fam = grid
    w = np.ones(sp.n_points)
    kappa = maximal_comparability(sp)
    assert vw_ainfty_constant(sp, w, fam).constant == pytest.approx(1.0)
    assert vw_rh_constant(sp, w, fam, 1.5).constant == pytest.approx(1.0)
    assert vw_ainfty_condition(sp, w, fam, p=2.0).constant == pytest.approx(1.0)
    imp = vw_improvement(sp, w, fam, [1.5, 2.0, 4.0], C_max=1.01)
    assert all(c == pytest.approx(1.0) for _, c in imp.curve) and imp.best == 4.0
    assert 1.0 <= kappa


def test_condition_half_ball_closed_form(grid):
    sp, fam = grid
    w = np.ones(sp.n_points)
    b = fam[5]
    m = sp.members(b)
    half = m[: m.size // 2]
    rep = vw_ainfty_condition(sp, w, [b], sampler=lambda *_: [("half", half)], p=3.0)
    frac = half.size / m.size
    assert rep.rows[0]["lhs"] == pytest.approx(frac)
    assert rep.constant == pytest.approx(frac ** (1 - 1 / 3.0))


def test_condition_infimum_matches_sweep():
    sp = PeriodicGrid(1, 64)
    w = make_test_field(sp, "power", a=0.4)
    b = Ball(20, 0.06)
    m = sp.members(b)
    E = m[::2]
    rep = vw_ainfty_condition(sp, w, [b], sampler=lambda *_: [("e", E)], p=2.0)
    wE = w[E].sum() * sp.cell_measure
    muB = m.size * sp.cell_measure
    best = math.inf
    for sigma in np.linspace(1.0, 1.0 / 0.06 + 1, 2000):
        r = 0.06 * sigma
        avg = oracles.ball_average(1, 64, 1.0, w, 20, r)
        mu = np.count_nonzero(oracles.torus_distances(1, 64, 1.0, 20) < r) * sp.cell_measure
        best = min(best, wE / (avg * mu) * mu / muB)
    assert rep.rows[0]["lhs"] == pytest.approx(best, rel=1e-12)


@given(st.floats(0.05, 20.0))
@settings(max_examples=10, deadline=None)
def test_classes_scale_invariant(c):
    sp = PeriodicGrid(1, 128)
    fam = ball_family(sp, centers_per_axis=4)
    w = make_test_field(sp, "power", a=0.5)
    for fn in (lambda v: vw_ainfty_constant(sp, v, fam).constant,
               lambda v: vw_rh_constant(sp, v, fam, 1.3).constant,
               lambda v: vw_ainfty_condition(sp, v, fam, SubsetSampler(n_random=3), 2.0).constant,
               lambda v: vw_improvement(sp, v, fam, [2.0]).constant):
        assert fn(c * w) == pytest.approx(fn(w), rel=1e-9)


def test_cp_tail_constant_weight_closed_form():
    sp = PeriodicGrid(1, 512)
    lam = 2.0 ** (-(2.0 - 1))
    # all dilates average to one, so the dyadic sum is the full geometric series from k = 1
    assert cp_tail(sp, np.ones(512), Ball(7, 0.01), 2.0, "dyadic") == pytest.approx(lam / (1 - lam))


@pytest.mark.parametrize("spec", [{"kind": "constant"}, {"kind": "power", "a": 0.5},
                                  {"kind": "bump"}, {"kind": "left_half"}])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_cp_tail_methods_agree(spec, p):
    sp = PeriodicGrid(1, 256)
    w = weight_from_spec(sp, spec)
    bound = 2.0 ** (p + 2)
    for b in ball_family(sp, centers_per_axis=8):
        r = cp_tail(sp, w, b, p, "integral") / cp_tail(sp, w, b, p, "dyadic")
        assert 1 / bound <= r <= bound


def test_cp_check_half_ball(grid):
    sp, fam = grid
    w = np.ones(sp.n_points)
    b = fam[3]
    m = sp.members(b)
    half = m[: m.size // 2]
    deltas = (0.25, 0.5, 1.0)
    rep = cp_check(sp, w, [b], sampler=lambda *_: [("half", half)], p=2.0, delta_grid=deltas)
    frac = half.size / m.size
    tail = cp_tail(sp, w, b, 2.0) * m.size * sp.cell_measure
    wE = half.size * sp.cell_measure
    for d, c in rep.curve:
        assert c == pytest.approx(wE / (frac**d * tail))


def test_negative_weight_rejected(grid):
    sp, fam = grid
    with pytest.raises(NonNegativityViolated):
        vw_ainfty_constant(sp, -np.ones(sp.n_points), fam)


def test_weight_specs():
    sp = PeriodicGrid(1, 64)
    assert np.all(weight_from_spec(sp, {"kind": "constant", "value": 2.0}) == 2.0)
    bump = weight_from_spec(sp, {"kind": "bump", "amplitude": 1.0, "width": 0.05})
    assert bump.max() == pytest.approx(2.0) and bump.min() >= 1.0
    lh = weight_from_spec(sp, {"kind": "left_half", "epsilon": 0.2})
    assert set(np.round(lh, 12)) == {0.2, 1.2}
    with pytest.raises(ValueError):
        weight_from_spec(sp, {"kind": "mystery"})


def test_subset_sampler_deterministic():
    sp = PeriodicGrid(1, 64)
    w = make_test_field(sp, "power", a=0.3)
    m = sp.members(Ball(10, 0.1))
    a = SubsetSampler(seed=4)(sp, w, m, 2)
    b = SubsetSampler(seed=4)(sp, w, m, 2)
    assert [x for x, _ in a] == [x for x, _ in b]
    assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(a, b))
    assert all(np.isin(e, m).all() and e.size > 0 for _, e in a)


def test_class_agreement_small():
    out = class_agreement({"kind": "constant"}, cells=(128, 256), centers_per_axis=4)
    assert out["agree"] and out["vw_ainfty"] and out["rh_some_q"] and out["condition_some_p"]
