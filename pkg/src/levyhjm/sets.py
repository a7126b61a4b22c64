"""Finite unions of intervals and atoms on the real line.

Jump integrands and jump measures are restricted to Borel sets bounded away
from zero; the sets that actually occur (atoms, half-lines, balls, annuli)
are all finite unions of intervals plus finitely many atoms, which is what
:class:`RealSet` represents exactly.  Interval endpoints carry open/closed
flags because atomic measures care about them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_INF = float("inf")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_lo: bool = False
    closed_hi: bool = True

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError(f"interval endpoints out of order: ({self.lo}, {self.hi})")

    def is_empty(self) -> bool:
        return self.lo == self.hi and not (self.closed_lo and self.closed_hi)

    def contains(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        left = y >= self.lo if self.closed_lo else y > self.lo
        right = y <= self.hi if self.closed_hi else y < self.hi
        return left & right

    def intersect(self, other: "Interval") -> "Interval | None":
        if self.lo > other.lo:
            lo, clo = self.lo, self.closed_lo
        elif self.lo < other.lo:
            lo, clo = other.lo, other.closed_lo
        else:
            lo, clo = self.lo, self.closed_lo and other.closed_lo
        if self.hi < other.hi:
            hi, chi = self.hi, self.closed_hi
        elif self.hi > other.hi:
            hi, chi = other.hi, other.closed_hi
        else:
            hi, chi = self.hi, self.closed_hi and other.closed_hi
        if lo > hi:
            return None
        out = Interval(lo, hi, clo, chi)
        return None if out.is_empty() else out


@dataclass(frozen=True)
class RealSet:
    """Disjoint union of intervals and atoms."""

    intervals: tuple[Interval, ...] = ()
    atoms: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(sorted(set(float(a) for a in self.atoms))))
        ivs = tuple(iv for iv in self.intervals if not iv.is_empty())
        object.__setattr__(self, "intervals", tuple(sorted(ivs, key=lambda iv: (iv.lo, iv.hi))))

    # -- constructors -------------------------------------------------

    @staticmethod
    def atom(y: float) -> "RealSet":
        return RealSet(atoms=(y,))

    @staticmethod
    def of_atoms(ys) -> "RealSet":
        return RealSet(atoms=tuple(ys))

    @staticmethod
    def interval(lo, hi, closed_lo=False, closed_hi=True) -> "RealSet":
        return RealSet(intervals=(Interval(lo, hi, closed_lo, closed_hi),))

    @staticmethod
    def half_line_above(c, closed=False) -> "RealSet":
        return RealSet.interval(c, _INF, closed, False)

    @staticmethod
    def half_line_below(c, closed=False) -> "RealSet":
        return RealSet.interval(-_INF, c, False, closed)

    @staticmethod
    def abs_at_least(c) -> "RealSet":
        """{y : |y| >= c} for c > 0."""
        if c <= 0:
            raise DomainError("abs_at_least needs a positive cutoff")
        return RealSet(intervals=(Interval(-_INF, -c, False, True), Interval(c, _INF, True, False)))

    @staticmethod
    def ball(center, radius) -> "RealSet":
        """Closed ball {y : |y - center| <= radius}."""
        return RealSet.interval(center - radius, center + radius, True, True)

    @staticmethod
    def annulus(center, r_outer, r_inner) -> "RealSet":
        """{y : r_inner < |y - center| <= r_outer} as two intervals."""
        if not 0 <= r_inner < r_outer:
            raise DomainError("annulus radii must satisfy 0 <= r_inner < r_outer")
        return RealSet(
            intervals=(
                Interval(center - r_outer, center - r_inner, True, False),
                Interval(center + r_inner, center + r_outer, False, True),
            )
        )

    # -- queries ------------------------------------------------------

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape, dtype=bool)
        for iv in self.intervals:
            out |= iv.contains(y)
        for a in self.atoms:
            out |= y == a
        return out

    def indicator(self, y):
        return self.contains(y).astype(float)

    def intersect(self, other: "RealSet") -> "RealSet":
        ivs = []
        for a in self.intervals:
            for b in other.intervals:
                c = a.intersect(b)
                if c is not None:
                    ivs.append(c)
        atoms = [a for a in self.atoms if bool(other.contains(a))]
        atoms += [a for a in other.atoms if bool(self.contains(a))]
        return RealSet(intervals=tuple(ivs), atoms=tuple(atoms))

    def distance_from_zero(self) -> float:
        """inf |y| over the set (0 if the set touches the origin)."""
        best = _INF
        for a in self.atoms:
            best = min(best, abs(a))
        for iv in self.intervals:
            if bool(iv.contains(0.0)):
                return 0.0
            best = min(best, min(abs(iv.lo), abs(iv.hi)))
        return best

    def is_bounded_away_from_zero(self) -> bool:
        return self.distance_from_zero() > 0.0
