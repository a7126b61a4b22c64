"""Exception types shared across the package.

Validation failures (bad parameters, malformed scenarios) derive from
:class:`ValidationError`; failures detected while computing (divergent
integrals, violated moment conditions, singular systems) derive from
:class:`NumericalError`.  The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""


class LevyHjmError(Exception):
    """Base class for all package errors."""


class ValidationError(LevyHjmError):
    """Inputs fail a structural or domain precondition."""


class DomainError(ValidationError):
    """Parameter outside its admissible domain (rates, masses, grids)."""


class ScenarioError(ValidationError):
    """Malformed scenario file; carries the offending TOML path."""

    def __init__(self, toml_path, message):
        self.toml_path = toml_path
        super().__init__(f"[{toml_path}] {message}")


class NumericalError(LevyHjmError):
    """A computation diverged or otherwise failed numerically."""


class DivergenceError(NumericalError):
    """An integral required to be finite diverged."""


class ClassError(NumericalError):
    """An integrand fails its required integrability class."""


class MomentError(NumericalError):
    """An exponential-moment condition fails (drift or tilt side)."""


class BoundError(NumericalError):
    """A quantity exceeds its declared bound."""


class MaturityError(ValidationError):
    """A maturity falls outside the surface's maturity grid."""


class SingularityError(NumericalError):
    """Normal equations degenerate beyond the regularization floor."""


class ReconstructionError(NumericalError):
    """A martingale reconstruction misses its pathwise tolerance."""


class NotConcentratedError(NumericalError):
    """A candidate concentration point has a mass-free annulus."""


class DegenerateStopError(NumericalError):
    """A stopping time degenerates to zero on a non-null set of paths."""
