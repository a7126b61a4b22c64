"""Simulation and verification toolkit for jump-diffusion forward-rate markets."""

__version__ = "0.1.0"

from .errors import (
    BoundError,
    ClassError,
    DegenerateStopError,
    DivergenceError,
    DomainError,
    LevyHjmError,
    MaturityError,
    MomentError,
    NotConcentratedError,
    NumericalError,
    ReconstructionError,
    ScenarioError,
    SingularityError,
    ValidationError,
)
from .measures import (
    AtomicMeasure,
    DoubleExponentialMeasure,
    LevyMeasure,
    TruncatedUniformMeasure,
    measure_from_config,
)
from .paths import LevyPath, LevyTriplet, PathBatch, make_grid, simulate_batch, simulate_path
from .rng import RngStream
from .sets import Interval, RealSet

__all__ = [
    "AtomicMeasure",
    "BoundError",
    "ClassError",
    "DegenerateStopError",
    "DivergenceError",
    "DomainError",
    "DoubleExponentialMeasure",
    "Interval",
    "LevyHjmError",
    "LevyMeasure",
    "LevyPath",
    "LevyTriplet",
    "MaturityError",
    "MomentError",
    "NotConcentratedError",
    "NumericalError",
    "PathBatch",
    "RealSet",
    "ReconstructionError",
    "RngStream",
    "ScenarioError",
    "SingularityError",
    "TruncatedUniformMeasure",
    "ValidationError",
    "make_grid",
    "measure_from_config",
    "simulate_batch",
    "simulate_path",
]
