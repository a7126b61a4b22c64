"""Jump-intensity measures: finite-activity families with exact masses.

Every family exposes masses, integrals, and sampling restricted to the
simulated support ``{|y| >= eps_trunc}``.  Measures must integrate
``|y|^2 /\\ 1``; that is checked at construction.  Interval masses use closed
forms; general integrands fall back to adaptive Gauss-Kronrod quadrature
(``scipy.integrate.quad``) at relative tolerance 1e-10.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import DivergenceError, DomainError
from .sets import Interval, RealSet

_INF = float("inf")
QUAD_RTOL = 1e-10


def _quad_piece(fn, lo, hi, points=()):
    """Integrate fn over (lo, hi), splitting at interior breakpoints."""
    if lo >= hi:
        return 0.0
    cuts = sorted({p for p in points if lo < p < hi})
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IntegrationWarning)
            val, err = quad(fn, a, b, epsabs=1e-13, epsrel=QUAD_RTOL, limit=200)
        if not math.isfinite(val):
            raise DivergenceError(f"integral diverged on ({a}, {b})")
        if err > max(1e-7, 1e-6 * abs(val)):
            raise DivergenceError(
                f"quadrature failed to converge on ({a}, {b}): value {val}, error {err}"
            )
        del caught
        total += val
    return total


def _clip_intervals(intervals, eps):
    """Intersect a list of Interval with {|y| >= eps}."""
    if eps <= 0.0:
        return list(intervals)
    keep = RealSet.abs_at_least(eps)
    out = []
    for iv in intervals:
        for kv in keep.intervals:
            c = iv.intersect(kv)
            if c is not None:
                out.append(c)
    return out


class LevyMeasure:
    """Base class; subclasses provide the family-specific pieces."""

    kind: str = ""
    eps_trunc: float = 0.0

    # -- family hooks --------------------------------------------------

    def _support_intervals(self) -> list[Interval]:
        raise NotImplementedError

    def _density(self, y: float) -> float:
        raise NotImplementedError

    def _interval_mass(self, lo: float, hi: float) -> float:
        """Mass of the open/closed-agnostic interval (lo, hi) within support."""
        raise NotImplementedError

    # -- shared API ----------------------------------------------------

    def restricted(self, eps: float) -> "LevyMeasure":
        if eps < 0:
            raise DomainError("truncation level must be non-negative")
        return replace(self, eps_trunc=float(eps))

    def _pieces(self, region: RealSet | None):
        sup = _clip_intervals(self._support_intervals(), self.eps_trunc)
        if region is None:
            return sup
        out = []
        for iv in sup:
            for rv in region.intervals:
                c = iv.intersect(rv)
                if c is not None:
                    out.append(c)
        return out

    def mass(self, region: RealSet | None = None) -> float:
        return sum(self._interval_mass(iv.lo, iv.hi) for iv in self._pieces(region))

    def total_rate(self) -> float:
        return self.mass()

    def integrate(self, f, region: RealSet | None = None, points=()) -> float:
        """integral of f against the measure over region /\\ {|y| >= eps_trunc}."""

        def weighted(y):
            d = self._density(y)
            if d == 0.0:
                # skip f where the density underflows; f may overflow out there
                return 0.0
            return f(y) * d

        total = 0.0
        base = list(points) + [-1.0, 1.0]
        for iv in self._pieces(region):
            total += _quad_piece(weighted, iv.lo, iv.hi, base)
        return total

    def small_jump_mean(self) -> float:
        """integral of y over {eps_trunc <= |y| <= 1}."""
        band = RealSet.interval(-1.0, 1.0, True, True)
        return self.integrate(lambda y: y, band)

    def square_cap_integral(self) -> float:
        return self.integrate(lambda y: min(y * y, 1.0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def quadrature_nodes(self, n: int = 160):
        """Fixed Gauss-Legendre nodes/weights for smooth integrands.

        Returns (ys, wts) with ``integral f dnu ~= sum wts * f(ys)`` over the
        truncated support.  Infinite exponential tails are cut where the
        remaining mass is below 1e-18 of the rate.  Integrands with kinks
        must be split by the caller; atomic families return the atoms exactly.
        """
        xs, ws = np.polynomial.legendre.leggauss(n)
        ys_out, wts_out = [], []
        for iv in self._pieces(None):
            lo, hi = iv.lo, iv.hi
            if hi == _INF:
                hi = lo + self._tail_cut(iv)
            if lo == -_INF:
                lo = hi - self._tail_cut(iv)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            ys = mid + half * xs
            dens = np.array([self._density(float(y)) for y in ys])
            ys_out.append(ys)
            wts_out.append(half * ws * dens)
        return np.concatenate(ys_out), np.concatenate(wts_out)

    def _tail_cut(self, iv: Interval) -> float:
        raise NotImplementedError("measure has an unbounded support piece")

    def _validate_common(self):
        if self.eps_trunc < 0:
            raise DomainError("eps_trunc must be non-negative")
        total = self.mass()
        if not math.isfinite(total):
            raise DomainError("measure has infinite mass on the simulated support")
        cap = self.square_cap_integral()
        if not math.isfinite(cap):
            raise DomainError("measure fails the |y|^2 /\\ 1 integrability requirement")

    def as_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class AtomicMeasure(LevyMeasure):
    """Finitely many atoms (y_k, lambda_k), y_k != 0, lambda_k > 0."""

    points_y: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()
    eps_trunc: float = 0.0
    kind: str = "atomic"

    def __post_init__(self):
        ys = np.asarray(self.points_y, dtype=float)
        lams = np.asarray(self.rates, dtype=float)
        if ys.size == 0 or ys.size != lams.size:
            raise DomainError("atomic measure needs matching, non-empty atoms and rates")
        if np.any(lams <= 0):
            raise DomainError("atom rates must be positive")
        if np.any(ys == 0.0):
            raise DomainError("atoms must be away from zero")
        if len(set(ys.tolist())) != ys.size:
            raise DomainError("atoms must be distinct")
        order = np.argsort(ys)
        object.__setattr__(self, "points_y", tuple(ys[order].tolist()))
        object.__setattr__(self, "rates", tuple(lams[order].tolist()))
        self._validate_common()

    def _active(self):
        ys = np.asarray(self.points_y)
        lams = np.asarray(self.rates)
        keep = np.abs(ys) >= self.eps_trunc
        return ys[keep], lams[keep]

    def mass(self, region: RealSet | None = None) -> float:
        ys, lams = self._active()
        if region is not None:
            keep = region.contains(ys)
            ys, lams = ys[keep], lams[keep]
        return float(np.sum(lams))

    def integrate(self, f, region: RealSet | None = None, points=()) -> float:
        ys, lams = self._active()
        if region is not None:
            keep = region.contains(ys)
            ys, lams = ys[keep], lams[keep]
        return float(sum(lam * f(y) for y, lam in zip(ys, lams)))

    def square_cap_integral(self) -> float:
        return self.integrate(lambda y: min(y * y, 1.0))

    def small_jump_mean(self) -> float:
        return self.integrate(lambda y: y, RealSet.interval(-1.0, 1.0, True, True))

    def sample(self, rng, n):
        ys, lams = self._active()
        if ys.size == 0:
            raise DomainError("no atoms above the truncation level")
        probs = np.cumsum(lams) / np.sum(lams)
        return ys[np.searchsorted(probs, rng.random(n), side="left")]

    def quadrature_nodes(self, n: int = 160):
        ys, lams = self._active()
        return ys.astype(float), lams.astype(float)

    # hooks unused (everything overridden with exact sums)
    def _support_intervals(self):
        return []

    def _density(self, y):
        return 0.0

    def _interval_mass(self, lo, hi):
        return 0.0

    def as_dict(self):
        return {
            "kind": self.kind,
            "atoms": list(self.points_y),
            "rates": list(self.rates),
            "eps_trunc": self.eps_trunc,
        }


@dataclass(frozen=True)
class DoubleExponentialMeasure(LevyMeasure):
    """Two-sided exponential density with total rate ``lam``.

    density(y) = lam * [ p * eta_plus * exp(-eta_plus * y)   (y > 0)
                         (1-p) * eta_minus * exp(eta_minus * y)  (y < 0) ]
    """

    lam: float = 1.0
    p: float = 0.5
    eta_plus: float = 1.0
    eta_minus: float = 1.0
    eps_trunc: float = 0.0
    kind: str = "double_exponential"

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("total rate lam must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("branch probability p must lie in [0, 1]")
        if self.eta_plus <= 0 or self.eta_minus <= 0:
            raise DomainError("tail rates eta_plus/eta_minus must be positive")
        self._validate_common()

    def _support_intervals(self):
        out = []
        if self.p < 1.0:
            out.append(Interval(-_INF, 0.0, False, False))
        if self.p > 0.0:
            out.append(Interval(0.0, _INF, False, False))
        return out

    def _density(self, y):
        if y > 0:
            return self.lam * self.p * self.eta_plus * math.exp(-self.eta_plus * y)
        if y < 0:
            return self.lam * (1.0 - self.p) * self.eta_minus * math.exp(self.eta_minus * y)
        return 0.0

    def _interval_mass(self, lo, hi):
        total = 0.0
        a, b = max(lo, 0.0), hi
        if b > a:  # positive side: lam*p*(e^{-eta a} - e^{-eta b})
            ea = math.exp(-self.eta_plus * a)
            eb = 0.0 if b == _INF else math.exp(-self.eta_plus * b)
            total += self.lam * self.p * (ea - eb)
        a, b = lo, min(hi, 0.0)
        if b > a:
            eb = math.exp(self.eta_minus * b)
            ea = 0.0 if a == -_INF else math.exp(self.eta_minus * a)
            total += self.lam * (1.0 - self.p) * (eb - ea)
        return total

    def small_jump_mean(self) -> float:
        # closed form of int y eta e^{-eta y} dy = [-(y + 1/eta) e^{-eta y}]
        def upper(eta, a, b):
            return (a + 1.0 / eta) * math.exp(-eta * a) - (b + 1.0 / eta) * math.exp(-eta * b)

        a = self.eps_trunc
        total = 0.0
        if a <= 1.0:
            total += self.lam * self.p * upper(self.eta_plus, a, 1.0)
            total -= self.lam * (1.0 - self.p) * upper(self.eta_minus, a, 1.0)
        return total

    def _tail_cut(self, iv):
        eta = self.eta_plus if iv.hi == _INF else self.eta_minus
        return 42.0 / eta  # leftover mass e^{-42} ~ 5.7e-19 of the side rate

    def sample(self, rng, n):
        eps = self.eps_trunc
        m_pos = self.lam * self.p * math.exp(-self.eta_plus * eps)
        m_neg = self.lam * (1.0 - self.p) * math.exp(-self.eta_minus * eps)
        if m_pos + m_neg <= 0:
            raise DomainError("no mass above the truncation level")
        pos = rng.random(n) < m_pos / (m_pos + m_neg)
        out = np.empty(n)
        # memorylessness: conditioning an exponential on >= eps just shifts it
        out[pos] = eps + rng.standard_exponential(int(pos.sum())) / self.eta_plus
        out[~pos] = -(eps + rng.standard_exponential(int((~pos).sum())) / self.eta_minus)
        return out

    def as_dict(self):
        return {
            "kind": self.kind,
            "lam": self.lam,
            "p": self.p,
            "eta_plus": self.eta_plus,
            "eta_minus": self.eta_minus,
            "eps_trunc": self.eps_trunc,
        }


@dataclass(frozen=True)
class TruncatedUniformMeasure(LevyMeasure):
    """Constant density on [lo, hi] minus the hole (-eps0, eps0), total rate lam."""

    lam: float = 1.0
    lo: float = -1.0
    hi: float = 1.0
    eps0: float = 0.0
    eps_trunc: float = 0.0
    kind: str = "truncated_uniform"

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("total rate lam must be positive")
        if self.hi <= self.lo:
            raise DomainError("support endpoints out of order")
        if self.eps0 < 0:
            raise DomainError("hole radius eps0 must be non-negative")
        if self._support_length() <= 0:
            raise DomainError("support is empty after removing the hole")
        self._validate_common()

    def _support_length(self):
        return sum(iv.hi - iv.lo for iv in self._support_intervals())

    def _support_intervals(self):
        out = []
        if self.eps0 == 0.0:
            return [Interval(self.lo, self.hi, True, True)]
        a, b = self.lo, min(self.hi, -self.eps0)
        if b > a:
            out.append(Interval(a, b, True, True))
        a, b = max(self.lo, self.eps0), self.hi
        if b > a:
            out.append(Interval(a, b, True, True))
        return out

    def _density(self, y):
        for iv in self._support_intervals():
            if iv.lo <= y <= iv.hi:
                return self.lam / self._support_length()
        return 0.0

    def _interval_mass(self, lo, hi):
        c = self.lam / self._support_length()
        total = 0.0
        for iv in self._support_intervals():
            a, b = max(lo, iv.lo), min(hi, iv.hi)
            if b > a:
                total += c * (b - a)
        return total

    def small_jump_mean(self) -> float:
        c = self.lam / self._support_length()
        total = 0.0
        for iv in self._pieces(RealSet.interval(-1.0, 1.0, True, True)):
            total += c * (iv.hi * iv.hi - iv.lo * iv.lo) / 2.0
        return total

    def sample(self, rng, n):
        pieces = self._pieces(None)
        if not pieces:
            raise DomainError("no support above the truncation level")
        lengths = np.array([iv.hi - iv.lo for iv in pieces])
        probs = np.cumsum(lengths) / lengths.sum()
        which = np.searchsorted(probs, rng.random(n), side="left")
        u = rng.random(n)
        los = np.array([iv.lo for iv in pieces])
        his = np.array([iv.hi for iv in pieces])
        return los[which] + u * (his[which] - los[which])

    def as_dict(self):
        return {
            "kind": self.kind,
            "lam": self.lam,
            "lo": self.lo,
            "hi": self.hi,
            "eps0": self.eps0,
            "eps_trunc": self.eps_trunc,
        }


@dataclass(frozen=True)
class NullMeasure(LevyMeasure):
    """The zero measure: a jump-free placeholder for pure-diffusion models."""

    eps_trunc: float = 0.0
    kind: str = "null"

    def _support_intervals(self):
        return []

    def _density(self, y):
        return 0.0

    def _interval_mass(self, lo, hi):
        return 0.0

    def sample(self, rng, n):
        return np.empty(0)

    def quadrature_nodes(self, n: int = 160):
        return np.empty(0), np.empty(0)

    def as_dict(self):
        return {"kind": self.kind}


_FAMILIES = {
    "atomic": AtomicMeasure,
    "double_exponential": DoubleExponentialMeasure,
    "truncated_uniform": TruncatedUniformMeasure,
    "null": NullMeasure,
}


def measure_from_config(cfg: dict) -> LevyMeasure:
    """Build a measure from a plain dict (the TOML [levy.measure] table)."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in _FAMILIES:
        raise DomainError(f"unknown measure kind {kind!r}; choose from {sorted(_FAMILIES)}")
    if kind == "atomic":
        atoms = cfg.pop("atoms", None)
        rates = cfg.pop("rates", None)
        if atoms is None or rates is None:
            raise DomainError("atomic measure config needs 'atoms' and 'rates'")
        return AtomicMeasure(points_y=tuple(atoms), rates=tuple(rates), **cfg)
    return _FAMILIES[kind](**cfg)
