import numpy as np
import pytest

from levyhjm.girsanov import GeneratingPair, constant_tilt
from levyhjm.market import HjmModel, VolatilitySpec
from levyhjm.measures import AtomicMeasure, DoubleExponentialMeasure
from levyhjm.paths import LevyTriplet, make_grid

SEED = 20260814


@pytest.fixture
def atom_measure():
    """Single atom at y = 1 with rate 2 (compound Poisson)."""
    return AtomicMeasure(points_y=(1.0,), rates=(2.0,))


@pytest.fixture
def two_atom_measure():
    return AtomicMeasure(points_y=(-0.5, 1.0), rates=(1.0, 2.0))


@pytest.fixture
def dexp_measure():
    return DoubleExponentialMeasure(lam=1.0, p=0.5, eta_plus=2.0, eta_minus=2.0)


@pytest.fixture
def jump_diffusion_triplet(dexp_measure):
    return LevyTriplet(a=0.05, q=0.02, measure=dexp_measure)


@pytest.fixture
def cp_triplet(atom_measure):
    """Pure compound Poisson: no drift, no Brownian part."""
    return LevyTriplet(a=0.0, q=0.0, measure=atom_measure)


@pytest.fixture
def grid():
    return make_grid(1.0, 128)


@pytest.fixture
def default_model(dexp_measure):
    return HjmModel(
        vol=VolatilitySpec(kind="exp_decay", sigma0=0.1, beta=0.3),
        pair=GeneratingPair(phi=0.0, psi=constant_tilt(0.1)),
        a=0.05,
        q=0.02,
        measure=dexp_measure,
        f0=0.02,
    )


@pytest.fixture
def wiener_model():
    """Brownian-only market (no jumps) with constant volatility."""
    return HjmModel(
        vol=VolatilitySpec(kind="constant", sigma0=0.1),
        pair=GeneratingPair(),
        a=0.0,
        q=1.0,
        measure=None,
        f0=0.02,
    )


def assert_within_se(estimate, target, se, n_se=4.0, label=""):
    z = abs(estimate - target) / se
    assert z <= n_se, f"{label}: estimate {estimate} vs {target} is {z:.2f} SE away"
