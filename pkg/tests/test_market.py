"""Forward-curve market: drift identities, martingale checks, scheme gap."""

import math

import numpy as np
import pytest

from levyhjm.errors import DomainError, MaturityError, MomentError
from levyhjm.girsanov import GeneratingPair, constant_tilt, linear_tilt
from levyhjm.market import (
    HjmModel,
    VolatilitySpec,
    check_drift_martingale,
    check_martingale_conditions,
    convergence_study,
    drift_table,
    evolve_discounted_chunk,
    evolve_forward_surface,
    hjm_alpha,
    hjm_drift,
    surface_consistency,
)
from levyhjm.measures import AtomicMeasure, DoubleExponentialMeasure
from levyhjm.paths import make_grid, simulate_batch, simulate_path
from levyhjm.rng import RngStream

from conftest import SEED, assert_within_se


def test_vol_spec_closed_forms():
    vol = VolatilitySpec(kind="exp_decay", sigma0=0.2, beta=0.5)
    s, T = 0.25, 1.5
    tau = T - s
    assert abs(vol.sigma(s, T) - 0.2 * math.exp(-0.5 * tau)) < 1e-15
    assert abs(vol.sigma_integral(s, T) - 0.2 / 0.5 * (1 - math.exp(-0.5 * tau))) < 1e-15
    assert vol.sigma(1.0, 0.5) == 0.0
    assert vol.sigma_integral(1.0, 0.5) == 0.0


def test_vol_spec_validation():
    with pytest.raises(DomainError):
        VolatilitySpec(kind="flat")
    with pytest.raises(DomainError):
        VolatilitySpec(kind="exp_decay", sigma0=0.1, beta=0.0)


def test_wiener_alpha_identity():
    """alpha(t, T) = sigma(t, T) * int_t^T sigma(t, v) dv with q = 1, nu = 0."""
    model = HjmModel(
        vol=VolatilitySpec(kind="constant", sigma0=0.3),
        pair=GeneratingPair(),
        a=0.0,
        q=1.0,
        measure=None,
        f0=0.02,
    )
    for s, T in [(0.0, 1.0), (0.25, 0.75), (0.5, 1.5)]:
        want = 0.3 * (0.3 * (T - s))
        assert abs(hjm_alpha(model, s, T) - want) <= 1e-12


def test_alpha_exp_decay_matches_product_rule():
    model = HjmModel(
        vol=VolatilitySpec(kind="exp_decay", sigma0=0.1, beta=0.3),
        pair=GeneratingPair(),
        a=0.0,
        q=1.0,
        measure=None,
        f0=0.02,
    )
    s, T = 0.2, 1.2
    want = model.vol.sigma(s, T) * model.vol.sigma_integral(s, T)
    assert abs(hjm_alpha(model, s, T) - want) < 1e-8


def test_drift_zero_at_maturity(default_model):
    assert abs(hjm_drift(default_model, 0.7, 0.7)) < 1e-14


def test_drift_table_matches_pointwise(default_model):
    grid = make_grid(1.0, 16)
    mats = np.array([1.0, 1.5])
    tbl = drift_table(default_model, grid, mats)
    for i in (0, 7, 15):
        for j, T in enumerate(mats):
            want = hjm_drift(default_model, float(grid[i]), float(T))
            assert abs(tbl.a_drift[i, j] - want) < 1e-9


def test_evolved_price_stays_positive(default_model, grid):
    batch = simulate_batch(default_model.triplet(), grid, SEED, 0, 256)
    phat = evolve_discounted_chunk(batch, default_model, [1.0, 1.25, 1.5])
    assert np.all(phat > 0)
    p0 = default_model.initial_discounted_price([1.0, 1.25, 1.5])
    assert np.allclose(phat[:, 0, :], p0[None, :], atol=1e-13)


def test_martingale_property_default_model(default_model):
    grid = make_grid(1.0, 128)
    rep = check_drift_martingale(
        default_model, grid, [1.0, 1.25, 1.5], grid[1:], 20_000, SEED
    )
    assert rep.worst_z < 4.0


def test_perturbed_drift_detected(default_model):
    grid = make_grid(1.0, 128)
    rep = check_drift_martingale(
        default_model, grid, [1.0, 1.5], grid[1:], 20_000, SEED, perturbation=0.05
    )
    assert rep.worst_z > 4.0


def test_martingale_for_null_measure():
    model = HjmModel(
        vol=VolatilitySpec(kind="constant", sigma0=0.1),
        pair=GeneratingPair(),
        a=0.0,
        q=1.0,
        measure=None,
        f0=0.02,
    )
    grid = make_grid(1.0, 64)
    rep = check_drift_martingale(model, grid, [1.25], grid[::8][1:], 20_000, SEED)
    assert rep.worst_z < 4.0


def test_checkpoints_off_grid_rejected(default_model, grid):
    with pytest.raises(DomainError):
        check_drift_martingale(default_model, grid, [1.25], [0.1234], 100, SEED)


def test_bad_maturities_rejected(default_model, grid):
    with pytest.raises(MaturityError):
        check_drift_martingale(default_model, grid, [-1.0], grid[1:3], 100, SEED)


def test_scheme_gap_halves_with_dt(default_model):
    rep = convergence_study(default_model, 1.0, 32, 3, [1.25, 1.5], 20_000, SEED)
    assert rep.ratios.shape == (2,)
    assert np.all(rep.ratios > 0.3) and np.all(rep.ratios < 0.7)


def test_surface_consistency_refines(default_model):
    """Same path at two resolutions: the quadrature gap shrinks under
    refinement (coarse level reuses the fine path's jumps and Wiener values)."""
    fine = simulate_path(default_model.triplet(), make_grid(1.0, 256), RngStream(SEED, 5))
    errs = []
    for path in (fine.coarsen(4), fine):
        surface = evolve_forward_surface(default_model, path, 1.5)
        rep = surface_consistency(surface, [1.0, 1.25, 1.5])
        errs.append(rep.max_error)
    assert errs[1] < errs[0]
    assert errs[1] < 5e-3


def test_moment_guard_rejects_divergent_tilt():
    """A linear tilt growing faster than the positive tail decays has no
    exponential moment; the screen must refuse to certify the model."""
    nu = DoubleExponentialMeasure(lam=1.0, p=0.5, eta_plus=0.4, eta_minus=2.0)
    model = HjmModel(
        vol=VolatilitySpec(kind="constant", sigma0=0.1),
        pair=GeneratingPair(phi=0.0, psi=linear_tilt(0.7)),
        a=0.0,
        q=0.0,
        measure=nu,
        f0=0.02,
    )
    with pytest.raises(MomentError):
        check_martingale_conditions(model, [1.25])


def test_moment_guard_passes_default(default_model):
    check_martingale_conditions(default_model, [1.0, 1.25, 1.5])


def test_moment_guard_passes_atomic():
    model = HjmModel(
        vol=VolatilitySpec(kind="constant", sigma0=0.1),
        pair=GeneratingPair(),
        a=0.0,
        q=0.0,
        measure=AtomicMeasure(points_y=(1.0, -0.5), rates=(2.0, 1.0)),
        f0=0.02,
    )
    check_martingale_conditions(model, [1.25])
