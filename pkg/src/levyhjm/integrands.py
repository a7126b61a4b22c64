"""Jump integrands: simple (piecewise on a time partition) and general.

A simple integrand is a finite sum g = sum_ij c_ij 1_{(t_i, t_{i+1}]} 1_{A_ij}
with the A_ij pairwise disjoint within each time slot and c_ij either a
constant or a function of the path restricted to [0, t_i] (so the integrand
stays predictable).  General integrands wrap a callable g(s, y), vectorized
in y, with flags the integrators use to pick exact versus quadrature paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .sets import RealSet


def _is_empty(s: RealSet) -> bool:
    return not s.intervals and not s.atoms


@dataclass
class SimpleIntegrand:
    partition: np.ndarray
    pieces: list  # per slot: list of (RealSet, coefficient)

    def __post_init__(self):
        part = np.asarray(self.partition, dtype=float)
        if part.ndim != 1 or part.shape[0] < 2 or np.any(np.diff(part) <= 0) or part[0] < 0:
            raise DomainError("partition must be increasing and start at or after 0")
        if len(self.pieces) != part.shape[0] - 1:
            raise DomainError("need one piece list per partition interval")
        for slot in self.pieces:
            for j, (a, _) in enumerate(slot):
                for b, _ in slot[j + 1 :]:
                    if not _is_empty(a.intersect(b)):
                        raise DomainError("jump sets within a time slot must be disjoint")
        self.partition = part

    def coefficient(self, i: int, j: int, path) -> float:
        c = self.pieces[i][j][1]
        if callable(c):
            return float(c(path, float(self.partition[i])))
        return float(c)


@dataclass
class GeneralIntegrand:
    """g(s, y), vectorized in y.

    Parameters
    ----------
    fn : callable
        ``fn(s, y)`` with scalar s and array y.
    time_homogeneous : bool
        True when g does not depend on s (enables exact linear compensators).
    region : RealSet, optional
        Support hint: g vanishes outside it (speeds up quadrature).
    kink_points : tuple
        y-locations where g is non-smooth, passed to the quadrature.
    """

    fn: Callable
    time_homogeneous: bool = True
    name: str = ""
    region: RealSet | None = None
    kink_points: tuple = field(default_factory=tuple)

    def __call__(self, s, y):
        return self.fn(s, np.asarray(y, dtype=float))


def indicator(region: RealSet, scale: float = 1.0, name: str = "") -> GeneralIntegrand:
    return GeneralIntegrand(
        fn=lambda s, y: scale * region.indicator(y),
        time_homogeneous=True,
        name=name or f"{scale}*1_A",
        region=region,
    )


def linear(region: RealSet | None = None, name: str = "y") -> GeneralIntegrand:
    if region is None:
        return GeneralIntegrand(fn=lambda s, y: np.asarray(y, dtype=float), name=name)
    return GeneralIntegrand(
        fn=lambda s, y: np.asarray(y, dtype=float) * region.indicator(y),
        name=name,
        region=region,
    )


def capped_abs(name: str = "|y|^1") -> GeneralIntegrand:
    return GeneralIntegrand(
        fn=lambda s, y: np.minimum(np.abs(y), 1.0),
        name=name,
        kink_points=(-1.0, 1.0),
    )


def scaled(g: GeneralIntegrand, c: float) -> GeneralIntegrand:
    return GeneralIntegrand(
        fn=lambda s, y: c * g.fn(s, y),
        time_homogeneous=g.time_homogeneous,
        name=f"{c}*({g.name})",
        region=g.region,
        kink_points=g.kink_points,
    )


FAMILIES = {
    "indicator": indicator,
    "linear": linear,
    "capped_abs": capped_abs,
}
