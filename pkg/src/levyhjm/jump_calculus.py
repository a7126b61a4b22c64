"""Compensated integrals against the jump measure, with P- and Q-compensators.

The integral of g against the compensated jump measure on a finite-activity
path is

    I(g)_t = sum_{tau <= t} g(tau, y_tau) - int_0^t int g(s, y) w(s, y) nu(dy) ds

where w = 1 under P and w = e^psi under a tilted measure.  Values are carried
at all grid and jump times; between recorded times the path is linear in t
(exactly so when the compensator rate is time-independent).

Integrability classes: ``psi1`` demands int |g| w nu ds < infinity, ``psi2``
the same for |g|^2, and ``psi12`` the split criterion int (|g|^2 /\\ |g|)
(ties at |g| = 1 resolved to the quadratic branch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, parallel
from .errors import ClassError, DivergenceError, DomainError
from .integrands import GeneralIntegrand, SimpleIntegrand
from .measures import LevyMeasure
from .paths import LevyPath, LevyTriplet, simulate_batch


@dataclass
class IntegralPath:
    """Integral values at the merged grid/jump event times of one path."""

    times: np.ndarray
    values: np.ndarray
    jump_increments: np.ndarray  # increment applied exactly at each event time
    is_grid: np.ndarray
    grid: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def at(self, t: float) -> float:
        """Value at t (linear between recorded events)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return 0.0
        if i >= self.times.shape[0] - 1:
            return float(self.values[-1])
        t0, t1 = self.times[i], self.times[i + 1]
        if t1 == t0:
            return float(self.values[i])
        base = self.values[i + 1] - self.jump_increments[i + 1]  # left limit at t1
        frac = (t - t0) / (t1 - t0)
        return float(self.values[i] + frac * (base - self.values[i]))

    def left_limit(self, k: int) -> float:
        return float(self.values[k] - self.jump_increments[k])

    def grid_values(self) -> np.ndarray:
        return self.values[self.is_grid]


def merge_event_times(grid: np.ndarray, jump_times: np.ndarray):
    """Sorted union of grid and jump times; grid entries first on ties."""
    times = np.concatenate([grid, jump_times])
    is_grid = np.zeros(times.shape[0], dtype=bool)
    is_grid[: grid.shape[0]] = True
    order = np.argsort(times, kind="stable")
    return times[order], is_grid[order]


def compensator_rate(g: GeneralIntegrand, measure: LevyMeasure, weight=None, s: float = 0.0):
    """kappa(s) = int g(s, y) w(s, y) nu(dy)."""

    def fn(y):
        val = np.asarray(g(s, np.asarray([y])), dtype=float).ravel()[0]
        if weight is not None:
            val *= float(np.exp(np.asarray(weight(s, np.asarray([y])), dtype=float).ravel()[0]))
        return val

    return measure.integrate(fn, region=g.region, points=g.kink_points)


def _compensator_on_grid(g, measure, weight, grid):
    """K(t_i) = int_0^{t_i} kappa(s) ds on the grid."""
    homo = g.time_homogeneous and (weight is None or getattr(weight, "time_homogeneous", False))
    if homo:
        kappa = compensator_rate(g, measure, weight, 0.0)
        return kappa * grid, True
    rates = np.array([compensator_rate(g, measure, weight, float(s)) for s in grid])
    out = np.zeros_like(grid)
    out[1:] = np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(grid))  # trapezoid
    return out, False


def integrate_general(
    g: GeneralIntegrand,
    path: LevyPath,
    weight=None,
    required_class: str | None = None,
) -> IntegralPath:
    """Compensated integral of a general integrand along one path.

    ``weight`` is the tilt exponent psi(s, y) (None for the P-compensator).
    ``required_class`` triggers a class check against the path's measure and
    raises :class:`ClassError` on failure.
    """
    measure = path.triplet.measure
    if required_class is not None:
        ensure_class(g, measure, weight, required_class, path.t_star)
    times, is_grid = merge_event_times(path.grid, path.jump_times)
    jump_vals = np.zeros(times.shape[0])
    if path.jump_times.shape[0]:
        g_at_jumps = np.asarray(
            [float(np.asarray(g(float(t), np.asarray([y])), dtype=float).ravel()[0])
             for t, y in zip(path.jump_times, path.jump_sizes)]
        )
        jump_vals[~is_grid] = g_at_jumps
    comp_grid, _ = _compensator_on_grid(g, measure, weight, path.grid)
    comp_at = np.interp(times, path.grid, comp_grid)
    values = np.cumsum(jump_vals) - comp_at
    return IntegralPath(times, values, jump_vals, is_grid, path.grid)


def integrate_simple(g: SimpleIntegrand, path: LevyPath, weight=None) -> IntegralPath:
    """Compensated integral of a simple integrand, straight from the definition."""
    measure = path.triplet.measure
    times, is_grid = merge_event_times(path.grid, path.jump_times)
    values = np.zeros(times.shape[0])
    jump_incr = np.zeros(times.shape[0])
    part = g.partition
    for i in range(part.shape[0] - 1):
        t_lo, t_hi = float(part[i]), float(part[i + 1])
        for j, (region, _) in enumerate(g.pieces[i]):
            coef = g.coefficient(i, j, path)
            if coef == 0.0:
                continue
            rate = _weighted_set_rate(measure, region, weight, t_lo, t_hi)
            in_set = region.contains(path.jump_sizes)
            tj = path.jump_times[in_set]
            counts = np.searchsorted(tj, np.minimum(times, t_hi), side="right") - np.searchsorted(
                tj, t_lo, side="right"
            )
            counts = np.where(times > t_lo, counts, 0)
            span = np.clip(np.minimum(times, t_hi) - t_lo, 0.0, None)
            values += coef * (counts - rate * span)
            hit = (~is_grid) & (times > t_lo) & (times <= t_hi)
            if np.any(hit):
                yj = path.jump_sizes[np.searchsorted(path.jump_times, times[hit], side="left")]
                jump_incr[hit] += coef * region.indicator(yj)
    return IntegralPath(times, values, jump_incr, is_grid, path.grid)


def _weighted_set_rate(measure, region, weight, t_lo, t_hi):
    """Average of int_A w(s, y) nu(dy) over the slot (exact when w is flat in s)."""
    if weight is None:
        return measure.mass(region)
    if getattr(weight, "time_homogeneous", False):
        return measure.integrate(lambda y: float(np.exp(weight(t_lo, np.asarray([y]))[0])), region)
    from scipy.integrate import quad

    val, _ = quad(
        lambda s: measure.integrate(lambda y: float(np.exp(weight(s, np.asarray([y]))[0])), region),
        t_lo,
        t_hi,
        epsrel=1e-10,
    )
    return val / (t_hi - t_lo)


# ----------------------------------------------------------------------
# integrability classes


@dataclass
class ClassCheckReport:
    clazz: str
    ok: bool
    value: float
    detail: str = ""


_CLASS_TRANSFORMS = {
    "psi1": lambda v: np.abs(v),
    "psi2": lambda v: v * v,
    "psi12": lambda v: np.where(np.abs(v) <= 1.0, v * v, np.abs(v)),
}


def class_check(
    g: GeneralIntegrand,
    measure: LevyMeasure,
    weight=None,
    clazz: str = "psi12",
    horizon: float = 1.0,
) -> ClassCheckReport:
    """Evaluate the defining integral of an integrability class."""
    if clazz not in _CLASS_TRANSFORMS:
        raise DomainError(f"unknown class {clazz!r}")
    transform = _CLASS_TRANSFORMS[clazz]

    def fn(y):
        arr = np.asarray([y], dtype=float)
        val = float(np.asarray(g(0.0, arr), dtype=float).ravel()[0])
        out = float(transform(np.asarray([val]))[0])
        if weight is not None:
            out *= float(np.exp(np.asarray(weight(0.0, arr), dtype=float).ravel()[0]))
        return out

    homo = g.time_homogeneous and (weight is None or getattr(weight, "time_homogeneous", False))
    try:
        if homo:
            inner = measure.integrate(fn, region=g.region, points=g.kink_points)
            value = horizon * inner
        else:
            from scipy.integrate import quad

            def fn_s(s):
                def f(y):
                    arr = np.asarray([y], dtype=float)
                    val = float(np.asarray(g(s, arr), dtype=float).ravel()[0])
                    out = float(transform(np.asarray([val]))[0])
                    if weight is not None:
                        out *= float(np.exp(np.asarray(weight(s, arr), dtype=float).ravel()[0]))
                    return out

                return measure.integrate(f, region=g.region, points=g.kink_points)

            value, _ = quad(fn_s, 0.0, horizon, epsrel=1e-8, limit=100)
    except DivergenceError as exc:
        return ClassCheckReport(clazz, False, float("inf"), str(exc))
    ok = bool(np.isfinite(value))
    return ClassCheckReport(clazz, ok, float(value), "" if ok else "non-finite value")


def ensure_class(g, measure, weight, clazz, horizon):
    report = class_check(g, measure, weight, clazz, horizon)
    if not report.ok:
        raise ClassError(
            f"integrand {g.name or '<anonymous>'} fails {clazz}: {report.detail or report.value}"
        )
    return report


# ----------------------------------------------------------------------
# Monte Carlo verifiers


@dataclass
class IsometryReport:
    name: str
    lhs: float
    rhs: float
    se: float
    n_paths: int
    master_seed: int
    t: float

    def as_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se": self.se,
            "n_paths": self.n_paths,
            "seed": self.master_seed,
            "t": self.t,
        }


def _terminal_values_chunk(g, triplet, grid, t, weight, master_seed, first, count):
    """Per-path I(g)_t for one chunk (and the jump-value flats for reuse)."""
    batch = simulate_batch(triplet, grid, master_seed, first, count)
    if batch.jump_times.shape[0]:
        keep = batch.jump_times <= t
        vals = np.zeros(batch.jump_times.shape[0])
        if g.time_homogeneous:
            vals[keep] = np.asarray(
                g(0.0, batch.jump_sizes[keep]), dtype=float
            )
        else:
            vals[keep] = np.asarray(
                [
                    float(np.asarray(g(float(tt), np.asarray([yy])), dtype=float).ravel()[0])
                    for tt, yy in zip(batch.jump_times[keep], batch.jump_sizes[keep])
                ]
            )
        jump_sums = kernels.segment_sums(vals, batch.offsets)
    else:
        jump_sums = np.zeros(count)
    comp_grid, _ = _compensator_on_grid(g, triplet.measure, weight, grid)
    comp_t = float(np.interp(t, grid, comp_grid))
    return batch, jump_sums - comp_t


def estimate_isometry(
    g: GeneralIntegrand,
    triplet: LevyTriplet,
    grid: np.ndarray,
    n_paths: int,
    master_seed: int,
    pair=None,
    t: float | None = None,
    threads: int | None = None,
) -> IsometryReport:
    """Monte Carlo check of E[(I(g)_t)^2] = E[int int g^2 w nu ds].

    With ``pair`` given, both sides are under the tilted measure: the left
    side is reweighted by the terminal density and the right side uses the
    tilted compensator.
    """
    t = float(grid[-1]) if t is None else float(t)
    weight = pair.psi if pair is not None else None

    def per_chunk(first, count):
        batch, ivals = _terminal_values_chunk(g, triplet, grid, t, weight, master_seed, first, count)
        x = ivals * ivals
        if pair is not None:
            from .girsanov import density_terminal_batch

            x = x * density_terminal_batch(pair, batch)
        return {"x": x}

    res = parallel.sweep(per_chunk, n_paths, threads)
    x = res["x"]
    lhs = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(n_paths))
    g2 = GeneralIntegrand(
        fn=lambda s, y: np.asarray(g(s, y), dtype=float) ** 2,
        time_homogeneous=g.time_homogeneous,
        region=g.region,
        kink_points=g.kink_points,
        name=f"({g.name})^2",
    )
    comp_grid, _ = _compensator_on_grid(g2, triplet.measure, weight, grid)
    rhs = float(np.interp(t, grid, comp_grid))
    return IsometryReport(g.name, lhs, rhs, se, n_paths, master_seed, t)


@dataclass
class CovariationReport:
    product_mean: float
    predicted: float
    se: float
    n_paths: int
    master_seed: int
    t: float

    def as_dict(self):
        return {
            "product_mean": self.product_mean,
            "predicted": self.predicted,
            "se": self.se,
            "n_paths": self.n_paths,
            "seed": self.master_seed,
            "t": self.t,
        }


def estimate_covariation_q(
    set_a,
    set_b,
    pair,
    triplet: LevyTriplet,
    grid: np.ndarray,
    n_paths: int,
    master_seed: int,
    t: float | None = None,
    threads: int | None = None,
) -> CovariationReport:
    """E_Q of the product of compensated counts of A and B versus the
    tilted mass of [0, t] x (A /\\ B)."""
    from .girsanov import density_terminal_batch, q_compensator

    t = float(grid[-1]) if t is None else float(t)
    rate_a = q_compensator(pair, triplet.measure, 0.0, set_a)
    rate_b = q_compensator(pair, triplet.measure, 0.0, set_b)
    if not (pair.psi.time_homogeneous):
        raise DomainError("covariation verifier needs a time-homogeneous tilt")

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, master_seed, first, count)
        keep = batch.jump_times <= t
        in_a = (set_a.contains(batch.jump_sizes) & keep).astype(float)
        in_b = (set_b.contains(batch.jump_sizes) & keep).astype(float)
        n_a = kernels.segment_sums(in_a, batch.offsets)
        n_b = kernels.segment_sums(in_b, batch.offsets)
        rho = density_terminal_batch(pair, batch)
        prod = (n_a - rate_a * t) * (n_b - rate_b * t) * rho
        return {"prod": prod}

    res = parallel.sweep(per_chunk, n_paths, threads)
    prod = res["prod"]
    inter = set_a.intersect(set_b)
    predicted = t * q_compensator(pair, triplet.measure, 0.0, inter)
    return CovariationReport(
        float(np.mean(prod)),
        float(predicted),
        float(np.std(prod, ddof=1) / np.sqrt(n_paths)),
        n_paths,
        master_seed,
        t,
    )
