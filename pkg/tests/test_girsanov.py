"""Density processes, reciprocal expansion, tilted-measure checks."""

import math

import numpy as np
import pytest

from levyhjm.errors import DomainError
from levyhjm.girsanov import (
    GeneratingPair,
    constant_tilt,
    density_grid_batch,
    density_path,
    density_terminal_batch,
    linear_tilt,
    q_compensator,
    reciprocal_density,
    transform_representation,
    z_under_q_decomposition,
    zero_tilt,
)
from levyhjm.jump_calculus import IntegralPath, estimate_covariation_q, merge_event_times
from levyhjm.measures import AtomicMeasure, DoubleExponentialMeasure
from levyhjm.paths import LevyTriplet, make_grid, simulate_batch, simulate_path
from levyhjm.rng import RngStream
from levyhjm.sets import RealSet

from conftest import SEED, assert_within_se

THETA = 0.3


def test_compound_poisson_density_closed_form(cp_triplet, grid):
    """rho_t = exp(theta N_t - lam t (e^theta - 1)) for the single-atom tilt."""
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    lam = 2.0
    batch = simulate_batch(cp_triplet, grid, SEED, 0, 64)
    rho = density_grid_batch(pair, batch)
    for i in range(batch.n_paths):
        p = batch.path(i)
        counts = np.array([np.sum(p.jump_times <= t) for t in grid])
        want = np.exp(THETA * counts - lam * grid * math.expm1(THETA))
        assert np.max(np.abs(rho[i] - want)) < 1e-10


def test_density_positive_and_mean_one(jump_diffusion_triplet, grid):
    pair = GeneratingPair(phi=0.2, psi=constant_tilt(0.1))
    n = 40_000
    vals = np.concatenate(
        [
            density_terminal_batch(pair, simulate_batch(jump_diffusion_triplet, grid, SEED, f, 8000))
            for f in range(0, n, 8000)
        ]
    )
    assert np.all(vals > 0)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert_within_se(vals.mean(), 1.0, se, label="E[rho_1]")


def test_reciprocal_density_pathwise(cp_triplet, grid):
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    for k in range(32):
        path = simulate_path(cp_triplet, grid, RngStream(SEED, k))
        rho = density_path(pair, path)
        rec = reciprocal_density(pair, path)
        assert np.array_equal(rho.times, rec.times)
        assert np.max(np.abs(rho.values * rec.values - 1.0)) < 1e-8


def test_reciprocal_rejects_brownian_with_phi(jump_diffusion_triplet, grid):
    pair = GeneratingPair(phi=0.5, psi=constant_tilt(0.1))
    path = simulate_path(jump_diffusion_triplet, grid, RngStream(SEED, 0))
    with pytest.raises(DomainError):
        reciprocal_density(pair, path)


def test_q_compensator_tilts_the_rate(two_atom_measure):
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    got = q_compensator(pair, two_atom_measure, 0.0, RealSet.atom(1.0))
    assert abs(got - 2.0 * math.exp(THETA)) < 1e-12


def test_tilted_jump_frequency(cp_triplet, grid):
    """Under Q the atom fires at rate lam e^theta: check E_P[rho N_1]."""
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    n = 40_000
    counts = []
    rhos = []
    for f in range(0, n, 8000):
        batch = simulate_batch(cp_triplet, grid, SEED + 3, f, 8000)
        counts.append(np.diff(batch.offsets).astype(float))
        rhos.append(density_terminal_batch(pair, batch))
    x = np.concatenate(rhos) * np.concatenate(counts)
    se = x.std(ddof=1) / math.sqrt(n)
    assert_within_se(x.mean(), 2.0 * math.exp(THETA), se, label="tilted rate")


def test_two_psi_fields_same_tilted_measure(cp_triplet, grid):
    """A constant tilt and a linear-in-y tilt that agree on the atom induce
    the same Q; bounded-payoff expectations must match within MC error."""
    pair_a = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    pair_b = GeneratingPair(phi=0.0, psi=linear_tilt(THETA))  # theta * y, equal at y=1
    n = 30_000
    means = []
    ses = []
    for pair in (pair_a, pair_b):
        vals = []
        for f in range(0, n, 6000):
            batch = simulate_batch(cp_triplet, grid, SEED + 4, f, 6000)
            h = np.minimum(np.diff(batch.offsets).astype(float), 3.0)
            vals.append(density_terminal_batch(pair, batch) * h)
        v = np.concatenate(vals)
        means.append(v.mean())
        ses.append(v.std(ddof=1) / math.sqrt(n))
    # same paths, same payoff, identical densities on the single atom
    assert abs(means[0] - means[1]) <= 4.0 * max(ses)


def test_z_decomposition_reconstructs(jump_diffusion_triplet, grid):
    pair = GeneratingPair(phi=0.4, psi=constant_tilt(0.1))
    for k in range(8):
        path = simulate_path(jump_diffusion_triplet, grid, RngStream(SEED, k))
        dec = z_under_q_decomposition(pair, path)
        assert dec.reconstruction_error < 1e-10


def test_covariation_disjoint_and_equal(two_atom_measure, grid):
    triplet = LevyTriplet(a=0.0, q=0.0, measure=two_atom_measure)
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    a, b = RealSet.atom(1.0), RealSet.atom(-0.5)
    rep = estimate_covariation_q(a, b, pair, triplet, grid, 30_000, SEED)
    assert rep.predicted == 0.0
    assert_within_se(rep.product_mean, 0.0, rep.se, label="disjoint covariation")
    rep2 = estimate_covariation_q(a, a, pair, triplet, grid, 30_000, SEED + 1)
    assert abs(rep2.predicted - 2.0 * math.exp(THETA)) < 1e-12
    assert_within_se(rep2.product_mean, rep2.predicted, rep2.se, label="equal-set covariation")


# ----------------------------------------------------------------------
# representation transport battery


def _merged_integral_path(path, values_at_times):
    times, is_grid = merge_event_times(path.grid, path.jump_times)
    vals = values_at_times(times)
    return IntegralPath(times, vals, np.zeros_like(vals), is_grid, path.grid)


def test_transform_constant_martingale(cp_triplet, grid):
    """M = M0: the P-representation of rho*M is M0 * (e^psi - 1) rho_{s-};
    its transform is identically zero and M is reconstructed exactly."""
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    m0 = 1.7
    for k in range(12):
        path = simulate_path(cp_triplet, grid, RngStream(SEED, k))
        m_path = _merged_integral_path(path, lambda t: np.full(t.shape[0], m0))

        def psi_m(s, y, m_left, rho_left):
            return m0 * rho_left * math.expm1(THETA)

        rep = transform_representation(pair, path, m_path, psi_m)
        assert rep.max_error < 1e-8
        # transformed integrand vanishes: check at the first jump if any
        if path.jump_times.size:
            s0, y0 = float(path.jump_times[0]), float(path.jump_sizes[0])
            val = rep.integrand.evaluate(s0, y0, m0, 1.0)
            assert abs(val) < 1e-12


def test_transform_identity_when_psi_zero(cp_triplet, grid):
    """psi = 0 keeps P = Q: the representation passes through unchanged."""
    pair = GeneratingPair(phi=0.0, psi=zero_tilt())
    lam = 2.0
    for k in range(12):
        path = simulate_path(cp_triplet, grid, RngStream(SEED + 1, k))

        def values(t):
            counts = np.searchsorted(path.jump_times, t, side="right")
            return counts - lam * t

        m_path = _merged_integral_path(path, values)

        def psi_m(s, y, m_left, rho_left):
            return rho_left  # rho = 1, M = pi~({1})

        rep = transform_representation(pair, path, m_path, psi_m)
        assert rep.max_error < 1e-8


def test_transform_compensated_count_under_q(cp_triplet, grid):
    """M = pi~_Q(t, {1}) with the constant tilt; psi_M from the product rule."""
    pair = GeneratingPair(phi=0.0, psi=constant_tilt(THETA))
    lam_q = 2.0 * math.exp(THETA)
    for k in range(12):
        path = simulate_path(cp_triplet, grid, RngStream(SEED + 2, k))

        def values(t):
            counts = np.searchsorted(path.jump_times, t, side="right")
            return counts - lam_q * t

        m_path = _merged_integral_path(path, values)

        def psi_m(s, y, m_left, rho_left):
            return rho_left * (math.exp(THETA) * (m_left + 1.0) - m_left)

        rep = transform_representation(pair, path, m_path, psi_m)
        assert rep.max_error < 1e-8
