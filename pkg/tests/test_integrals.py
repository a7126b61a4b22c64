"""Compensated jump integrals: hand-checkable paths, isometry, class gates."""

import math

import numpy as np
import pytest

from levyhjm.errors import ClassError, DomainError
from levyhjm.integrands import GeneralIntegrand, SimpleIntegrand, capped_abs, indicator, linear, scaled
from levyhjm.jump_calculus import (
    class_check,
    compensator_rate,
    ensure_class,
    estimate_isometry,
    integrate_general,
    integrate_simple,
    merge_event_times,
)
from levyhjm.measures import AtomicMeasure, DoubleExponentialMeasure
from levyhjm.paths import LevyPath, LevyTriplet, make_grid, simulate_batch
from levyhjm.rng import RngStream
from levyhjm.sets import RealSet

from conftest import SEED, assert_within_se


def handmade_path(jump_times, jump_sizes, measure, n_steps=8):
    grid = make_grid(1.0, n_steps)
    jt = np.asarray(jump_times, dtype=float)
    ys = np.asarray(jump_sizes, dtype=float)
    triplet = LevyTriplet(a=0.0, q=0.0, measure=measure)
    w = np.zeros(grid.shape[0])
    cum = np.array([ys[jt <= t].sum() for t in grid])
    z = cum - measure.small_jump_mean() * grid
    return LevyPath(grid=grid, w=w, jump_times=jt, jump_sizes=ys, z=z, triplet=triplet)


def test_merge_event_times_grid_first_on_ties():
    grid = np.array([0.0, 0.5, 1.0])
    times, is_grid = merge_event_times(grid, np.array([0.25, 0.5]))
    assert np.array_equal(times, [0.0, 0.25, 0.5, 0.5, 1.0])
    assert list(is_grid) == [True, False, True, False, True]


def test_integrate_general_hand_sum():
    """Two atoms, two jumps: terminal value is (sum of g) - t * int g dnu."""
    nu = AtomicMeasure(points_y=(-0.5, 1.0), rates=(1.0, 2.0))
    path = handmade_path([0.3, 0.7], [1.0, -0.5], nu)
    g = linear()
    out = integrate_general(g, path)
    kappa = 1.0 * (-0.5) + 2.0 * 1.0  # int y nu(dy)
    assert abs(out.terminal - (0.5 - kappa)) < 1e-12
    assert abs(out.at(0.5) - (1.0 - kappa * 0.5)) < 1e-12
    # left limit just before the first jump is pure compensator drift
    k = int(np.where(~out.is_grid)[0][0])
    assert abs(out.left_limit(k) - (-kappa * 0.3)) < 1e-12


def test_integrate_simple_matches_general_on_indicators():
    nu = AtomicMeasure(points_y=(-0.5, 1.0), rates=(1.0, 2.0))
    path = handmade_path([0.2, 0.55, 0.8], [1.0, 1.0, -0.5], nu)
    region = RealSet.atom(1.0)
    simple = SimpleIntegrand(
        partition=np.array([0.0, 1.0]), pieces=[[(region, 2.0)]]
    )
    general = indicator(region, scale=2.0)
    a = integrate_simple(simple, path)
    b = integrate_general(general, path)
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_integrate_simple_predictable_coefficient():
    """Path-dependent coefficient frozen at the slot's left endpoint."""
    nu = AtomicMeasure(points_y=(1.0,), rates=(2.0,))
    path = handmade_path([0.3, 0.8], [1.0, 1.0], nu)
    region = RealSet.atom(1.0)

    def coef(p, t_left):
        # number of jumps up to the slot start
        return float(np.sum(p.jump_times <= t_left))

    simple = SimpleIntegrand(
        partition=np.array([0.0, 0.5, 1.0]),
        pieces=[[(region, coef)], [(region, coef)]],
    )
    out = integrate_simple(simple, path)
    # slot 1 has coefficient 0 (no jumps by t=0): contributes nothing.
    # slot 2 has coefficient 1: one jump at 0.8 minus rate 2 * 0.5 span.
    assert abs(out.terminal - (1.0 - 2.0 * 0.5)) < 1e-12


def test_simple_integrand_rejects_overlapping_sets():
    with pytest.raises(DomainError):
        SimpleIntegrand(
            partition=np.array([0.0, 1.0]),
            pieces=[[(RealSet.interval(0.0, 2.0), 1.0), (RealSet.atom(1.0), 2.0)]],
        )


def test_compensator_rate_closed_form():
    nu = DoubleExponentialMeasure(lam=1.0, p=1.0, eta_plus=2.0, eta_minus=1.0)
    got = compensator_rate(linear(), nu)
    assert abs(got - 0.5) < 1e-10  # E[Exp(2)] = 1/2, rate 1


def test_compensator_rate_with_tilt_weight():
    from levyhjm.girsanov import constant_tilt

    nu = AtomicMeasure(points_y=(1.0,), rates=(2.0,))
    got = compensator_rate(indicator(RealSet.atom(1.0)), nu, weight=constant_tilt(0.3))
    assert abs(got - 2.0 * math.exp(0.3)) < 1e-12


def test_isometry_atomic_indicator_exact_rhs():
    """c * 1_{{1}} with atom rate 2: rhs = t c^2 * 2 exactly."""
    nu = AtomicMeasure(points_y=(1.0,), rates=(2.0,))
    triplet = LevyTriplet(a=0.0, q=0.0, measure=nu)
    g = indicator(RealSet.atom(1.0), scale=3.0)
    rep = estimate_isometry(g, triplet, make_grid(1.0, 64), 20_000, SEED)
    assert rep.rhs == 18.0
    assert_within_se(rep.lhs, rep.rhs, rep.se, label="atomic isometry")


def test_isometry_continuous_measure():
    nu = DoubleExponentialMeasure(lam=1.0, p=0.5, eta_plus=2.0, eta_minus=2.0)
    triplet = LevyTriplet(a=0.0, q=0.0, measure=nu)
    rep = estimate_isometry(capped_abs(), triplet, make_grid(1.0, 64), 20_000, SEED + 1)
    assert_within_se(rep.lhs, rep.rhs, rep.se, label="capped-abs isometry")


def test_isometry_intermediate_time():
    nu = AtomicMeasure(points_y=(1.0,), rates=(2.0,))
    triplet = LevyTriplet(a=0.0, q=0.0, measure=nu)
    g = indicator(RealSet.atom(1.0))
    rep = estimate_isometry(g, triplet, make_grid(1.0, 64), 20_000, SEED + 2, t=0.5)
    assert abs(rep.rhs - 1.0) < 1e-12
    assert_within_se(rep.lhs, rep.rhs, rep.se, label="isometry at t=0.5")


def test_class_check_square_int_but_not_abs_int():
    """g(y) = y^{-1/2} indicator near zero on a measure with density ~ 1/|y|
    would diverge; use a milder example: 1/sqrt(|y|) against uniform density
    is integrable, squared it is still integrable, so both classes hold."""
    nu = DoubleExponentialMeasure(lam=1.0, p=0.5, eta_plus=1.0, eta_minus=1.0)
    g = GeneralIntegrand(fn=lambda s, y: np.exp(np.abs(y)), name="exp|y|")
    # e^{|y|} against e^{-|y|} tails: psi1 integral diverges
    rep = class_check(g, nu, clazz="psi1")
    assert not rep.ok
    with pytest.raises(ClassError):
        ensure_class(g, nu, None, "psi1", 1.0)


def test_class_check_passes_for_capped():
    nu = DoubleExponentialMeasure(lam=1.0, p=0.5, eta_plus=2.0, eta_minus=2.0)
    rep = class_check(capped_abs(), nu, clazz="psi12")
    assert rep.ok and np.isfinite(rep.value)


def test_scaled_integrand_scales_integral():
    nu = AtomicMeasure(points_y=(1.0,), rates=(2.0,))
    path = handmade_path([0.4], [1.0], nu)
    base = indicator(RealSet.atom(1.0))
    doubled = scaled(base, 2.0)
    a = integrate_general(base, path)
    b = integrate_general(doubled, path)
    assert np.allclose(2.0 * a.values, b.values, atol=1e-12)
