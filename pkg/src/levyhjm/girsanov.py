"""Exponential change of measure generated by a pair (phi, psi).

The density process solves d rho = rho_{s-} (phi dW + int (e^psi - 1) d pi~)
with rho_0 = 1, and has the explicit form rho = e^Y,

    Y_t = int_0^t phi dW - 1/2 int_0^t q phi^2 ds
          + sum_{tau <= t} psi(tau, y_tau) - int_0^t int (e^psi - 1) nu(dy) ds

(the two jump integrals of the exponential formula collapse to the psi-sum
minus the exponential compensator on finite-activity paths).  Under the
tilted measure the jump compensator acquires the factor e^psi and the
Wiener part gains drift q * phi.

Everything downstream samples under P and reweights by rho; no Q-sampler
exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import ClassError, DomainError, ReconstructionError
from .integrands import GeneralIntegrand
from .jump_calculus import (
    IntegralPath,
    _compensator_on_grid,
    class_check,
    ensure_class,
    merge_event_times,
)
from .measures import LevyMeasure
from .paths import LevyPath, PathBatch
from .sets import RealSet


@dataclass
class TiltField:
    """psi(s, y), vectorized in y."""

    fn: Callable
    time_homogeneous: bool = True
    name: str = ""
    kink_points: tuple = field(default_factory=tuple)

    def __call__(self, s, y):
        return np.asarray(self.fn(s, np.asarray(y, dtype=float)), dtype=float)


def zero_tilt() -> TiltField:
    return TiltField(fn=lambda s, y: np.zeros_like(np.asarray(y, dtype=float)), name="0")


def constant_tilt(theta: float) -> TiltField:
    return TiltField(
        fn=lambda s, y: np.full_like(np.asarray(y, dtype=float), float(theta)),
        name=f"const({theta})",
    )


def linear_tilt(c: float) -> TiltField:
    return TiltField(fn=lambda s, y: c * np.asarray(y, dtype=float), name=f"{c}*y")


TILT_KINDS = {"zero": zero_tilt, "constant": constant_tilt, "linear": linear_tilt}


@dataclass
class GeneratingPair:
    """Deterministic generating pair: phi drives the Wiener tilt, psi the jumps."""

    phi: Callable | float = 0.0
    psi: TiltField = field(default_factory=zero_tilt)

    def phi_at(self, s) -> np.ndarray:
        if callable(self.phi):
            return np.asarray(self.phi(np.asarray(s, dtype=float)), dtype=float)
        return np.full_like(np.asarray(s, dtype=float), float(self.phi))

    @property
    def phi_is_zero(self) -> bool:
        return not callable(self.phi) and float(self.phi) == 0.0

    def exp_tilt_minus_one(self) -> GeneralIntegrand:
        return GeneralIntegrand(
            fn=lambda s, y: np.exp(self.psi(s, y)) - 1.0,
            time_homogeneous=self.psi.time_homogeneous,
            name=f"e^({self.psi.name})-1",
            kink_points=self.psi.kink_points,
        )

    def validate(self, measure: LevyMeasure, horizon: float) -> None:
        """The jump tilt must keep e^psi - 1 in the split class."""
        ensure_class(self.exp_tilt_minus_one(), measure, None, "psi12", horizon)


def q_compensator(pair: GeneratingPair, measure: LevyMeasure, s: float, region: RealSet) -> float:
    """Tilted jump-intensity mass: int_region e^{psi(s, y)} nu(dy)."""
    return measure.integrate(
        lambda y: float(np.exp(pair.psi(s, np.asarray([y]))[0])),
        region=region,
        points=pair.psi.kink_points,
    )


def _exp_comp_on_grid(pair, measure, grid):
    """K(t_i) = int_0^{t_i} int (e^psi - 1) nu dy ds on the grid."""
    return _compensator_on_grid(pair.exp_tilt_minus_one(), measure, None, grid)[0]


def _brownian_exponent_on_grid(pair, path_or_w, grid, q):
    """int phi dW - 1/2 int q phi^2 ds with left-point sums; (n_grid,) or (n, n_grid)."""
    w = path_or_w
    dt = np.diff(grid)
    phi_left = pair.phi_at(grid[:-1])
    dw = np.diff(w, axis=-1)
    incr = phi_left * dw - 0.5 * q * phi_left**2 * dt
    out = np.zeros(w.shape)
    out[..., 1:] = np.cumsum(incr, axis=-1)
    return out


@dataclass
class DensityPath:
    """rho = e^Y at the merged event times of one path."""

    times: np.ndarray
    log_values: np.ndarray
    values: np.ndarray
    jump_psi: np.ndarray  # psi(tau, y) applied at each event (0 at grid times)
    is_grid: np.ndarray
    grid: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def grid_values(self) -> np.ndarray:
        return self.values[self.is_grid]

    def left_limit(self, k: int) -> float:
        return float(self.values[k] * math.exp(-self.jump_psi[k]))

    def at(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[max(i, 0)]) if i >= 0 else 1.0


def density_path(pair: GeneratingPair, path: LevyPath, validate: bool = True) -> DensityPath:
    """Density process along one path via the explicit exponential formula."""
    measure = path.triplet.measure
    if validate:
        pair.validate(measure, path.t_star)
    times, is_grid = merge_event_times(path.grid, path.jump_times)
    jump_psi = np.zeros(times.shape[0])
    if path.jump_times.shape[0]:
        psis = np.array(
            [float(pair.psi(float(t), np.asarray([y]))[0]) for t, y in zip(path.jump_times, path.jump_sizes)]
        )
        jump_psi[~is_grid] = psis
    comp = _exp_comp_on_grid(pair, measure, path.grid)
    comp_at = np.interp(times, path.grid, comp)
    bro_grid = _brownian_exponent_on_grid(pair, path.w, path.grid, path.triplet.q)
    bro_at = np.interp(times, path.grid, bro_grid)
    y_vals = bro_at + np.cumsum(jump_psi) - comp_at
    return DensityPath(times, y_vals, np.exp(y_vals), jump_psi, is_grid, path.grid)


def density_grid_batch(pair: GeneratingPair, batch: PathBatch) -> np.ndarray:
    """(n_paths, n_grid) density values at grid times for a whole batch."""
    grid = batch.grid
    psis = (
        pair.psi(0.0, batch.jump_sizes)
        if pair.psi.time_homogeneous
        else np.array(
            [float(pair.psi(float(t), np.asarray([y]))[0]) for t, y in zip(batch.jump_times, batch.jump_sizes)]
        )
    )
    cum_psi = kernels.cumulative_jump_sums(grid, batch.jump_times, psis, batch.offsets)
    comp = _exp_comp_on_grid(pair, batch.triplet.measure, grid)
    y_vals = cum_psi - comp[None, :]
    if not pair.phi_is_zero:
        y_vals = y_vals + _brownian_exponent_on_grid(pair, batch.w, grid, batch.triplet.q)
    return np.exp(y_vals)


def density_terminal_batch(pair: GeneratingPair, batch: PathBatch) -> np.ndarray:
    """Terminal density per path (cheaper than the full grid)."""
    psis = (
        pair.psi(0.0, batch.jump_sizes)
        if pair.psi.time_homogeneous
        else np.array(
            [float(pair.psi(float(t), np.asarray([y]))[0]) for t, y in zip(batch.jump_times, batch.jump_sizes)]
        )
    )
    sums = kernels.segment_sums(np.asarray(psis, dtype=float), batch.offsets)
    comp = _exp_comp_on_grid(pair, batch.triplet.measure, batch.grid)
    y_vals = sums - comp[-1]
    if not pair.phi_is_zero:
        y_vals = y_vals + _brownian_exponent_on_grid(pair, batch.w, batch.grid, batch.triplet.q)[:, -1]
    return np.exp(y_vals)


def reciprocal_density(pair: GeneratingPair, path: LevyPath) -> DensityPath:
    """1/rho via the forward expansion

        R_t = 1 - int int R_{s-} (e^psi - 1) d pi~ + int int R_{s-} (e^-psi + e^psi - 2) d pi

    valid on the pure-jump branch (q = 0 or phi identically 0).  Between
    jumps the remaining compensator drift dR = R int (e^psi - 1) nu ds is a
    linear ODE and is integrated exactly; at a jump both jump terms are added
    as written.
    """
    if path.triplet.q > 0 and not pair.phi_is_zero:
        raise DomainError("reciprocal expansion is only derived for the pure-jump branch")
    measure = path.triplet.measure
    times, is_grid = merge_event_times(path.grid, path.jump_times)
    comp = _exp_comp_on_grid(pair, measure, path.grid)  # int_0^t int (e^psi-1) nu ds
    comp_at = np.interp(times, path.grid, comp)
    values = np.empty(times.shape[0])
    jump_psi = np.zeros(times.shape[0])
    r = 1.0
    prev_comp = 0.0
    jump_ptr = 0
    for k in range(times.shape[0]):
        r *= math.exp(comp_at[k] - prev_comp)  # exact between-event compensator factor
        prev_comp = comp_at[k]
        if not is_grid[k]:
            y = path.jump_sizes[jump_ptr]
            tau = path.jump_times[jump_ptr]
            psi_val = float(pair.psi(float(tau), np.asarray([y]))[0])
            e_psi = math.exp(psi_val)
            r = r + r * (-(e_psi - 1.0)) + r * (math.exp(-psi_val) + e_psi - 2.0)
            jump_psi[k] = psi_val
            jump_ptr += 1
        values[k] = r
    return DensityPath(times, np.log(values), values, jump_psi, is_grid, path.grid)


@dataclass
class ZDecomposition:
    """Pathwise split of Z under the tilted measure."""

    grid: np.ndarray
    a_tilde: np.ndarray
    w_tilde: np.ndarray
    small_compensated: np.ndarray
    big_jumps: np.ndarray
    reconstruction_error: float


def z_under_q_decomposition(pair: GeneratingPair, path: LevyPath) -> ZDecomposition:
    """Drift, tilted-Wiener, compensated-small-jump and big-jump components.

    The Wiener part loses drift q * int phi ds (that is what makes it a
    Wiener process under the tilted measure, matching the q*phi*Sigma term
    in the no-arbitrage drift), and the small-jump compensator picks up the
    factor e^psi; the four components sum back to Z exactly.
    """
    grid = path.grid
    tri = path.triplet
    measure = tri.measure
    dt = np.diff(grid)
    phi_left = pair.phi_at(grid[:-1])
    phi_cum = np.zeros_like(grid)
    phi_cum[1:] = np.cumsum(phi_left * dt)
    w_tilde = path.w - tri.q * phi_cum

    band = RealSet.interval(-1.0, 1.0, True, True)
    y_exp_m1 = GeneralIntegrand(
        fn=lambda s, y: np.asarray(y) * (np.exp(pair.psi(s, y)) - 1.0) * band.indicator(y),
        time_homogeneous=pair.psi.time_homogeneous,
        name="y(e^psi-1) on |y|<=1",
        kink_points=(-1.0, 1.0),
    )
    drift_comp, _ = _compensator_on_grid(y_exp_m1, measure, None, grid)
    a_tilde = tri.a * grid + tri.q * phi_cum + drift_comp

    small = np.abs(path.jump_sizes) <= 1.0
    off = np.array([0, path.jump_times.shape[0]], dtype=np.int64)
    small_cum = kernels.cumulative_jump_sums(
        grid, path.jump_times, path.jump_sizes * small, off
    )[0]
    big_cum = kernels.cumulative_jump_sums(
        grid, path.jump_times, path.jump_sizes * (~small), off
    )[0]
    y_exp = GeneralIntegrand(
        fn=lambda s, y: np.asarray(y) * np.exp(pair.psi(s, y)) * band.indicator(y),
        time_homogeneous=pair.psi.time_homogeneous,
        name="y e^psi on |y|<=1",
        kink_points=(-1.0, 1.0),
    )
    small_comp, _ = _compensator_on_grid(y_exp, measure, None, grid)
    small_compensated = small_cum - small_comp

    total = a_tilde + w_tilde + small_compensated + big_cum
    err = float(np.max(np.abs(total - path.z)))
    return ZDecomposition(grid, a_tilde, w_tilde, small_compensated, big_cum, err)


# ----------------------------------------------------------------------
# martingale-representation transport to the tilted measure


@dataclass
class TransformedIntegrand:
    """The tilted-measure representation integrand

        psi~_M(s, y) = M_{s-} e^{-psi} (1 - e^psi) + rho_{s-}^{-1} e^{-psi} psi_M(s, y)

    evaluated against the path's known left limits.
    """

    pair: GeneratingPair
    psi_m: Callable  # psi_m(s, y, m_left, rho_left) vectorized in y

    def evaluate(self, s, y, m_left, rho_left):
        y = np.asarray(y, dtype=float)
        e_psi = np.exp(self.pair.psi(s, y))
        return m_left * (1.0 - e_psi) / e_psi + (1.0 / (rho_left * e_psi)) * np.asarray(
            self.psi_m(s, y, m_left, rho_left), dtype=float
        )


@dataclass
class TransformReport:
    integrand: TransformedIntegrand
    times: np.ndarray
    reconstructed: np.ndarray
    target: np.ndarray
    max_error: float


def transform_representation(
    pair: GeneratingPair,
    path: LevyPath,
    m_path: IntegralPath,
    psi_m: Callable,
    tol: float = 1e-8,
    raise_on_fail: bool = True,
) -> TransformReport:
    """Transport a P-representation of rho*M to a tilted-measure representation of M.

    ``psi_m(s, y, m_left, rho_left)`` is the P-integrand of rho*M, and
    ``m_path.values`` carries M itself (including M(0)) at the merged event
    times of ``path``.  The transformed integrand is integrated against the
    tilted compensated jump measure along the path and compared with M at
    every event time.  Only the pure-jump branch (phi = 0) is supported, and
    e^psi - 1 must be absolutely integrable.
    """
    if not pair.phi_is_zero:
        raise DomainError("representation transport needs phi = 0")
    measure = path.triplet.measure
    ensure_class(pair.exp_tilt_minus_one(), measure, None, "psi1", path.t_star)
    rho = density_path(pair, path, validate=False)
    tilde = TransformedIntegrand(pair, psi_m)

    times = rho.times
    is_grid = rho.is_grid
    comp_rho = _exp_comp_on_grid(pair, measure, path.grid)

    def rho_between(k_prev: int, s: float) -> float:
        """rho(s) for s strictly inside the segment after event k_prev."""
        k_s = float(np.interp(s, path.grid, comp_rho))
        k_prev_t = float(np.interp(times[k_prev], path.grid, comp_rho))
        return math.exp(rho.log_values[k_prev] - (k_s - k_prev_t))

    def kappa(s: float, m_left: float, r_left: float) -> float:
        return measure.integrate(
            lambda y: float(
                tilde.evaluate(s, np.asarray([y]), m_left, r_left)[0]
                * math.exp(float(pair.psi(s, np.asarray([y]))[0]))
            ),
            points=pair.psi.kink_points,
        )

    reconstructed = np.empty(times.shape[0])
    acc = float(m_path.values[0])
    jump_ptr = 0
    for k in range(times.shape[0]):
        t_k = float(times[k])
        t_prev = float(times[k - 1]) if k else 0.0
        if t_k > t_prev:
            # Simpson over (t_prev, t_k): right limit at the left end, exact
            # interior values, left limits at the right end.
            mid = 0.5 * (t_prev + t_k)
            k_lo = kappa(t_prev, float(m_path.values[k - 1]), float(rho.values[k - 1]))
            k_mid = kappa(mid, m_path.at(mid), rho_between(k - 1, mid))
            k_hi = kappa(t_k, m_path.left_limit(k), rho.left_limit(k))
            acc -= (t_k - t_prev) / 6.0 * (k_lo + 4.0 * k_mid + k_hi)
        if not is_grid[k]:
            y = path.jump_sizes[jump_ptr]
            acc += float(
                tilde.evaluate(t_k, np.asarray([y]), m_path.left_limit(k), rho.left_limit(k))[0]
            )
            jump_ptr += 1
        reconstructed[k] = acc

    target = m_path.values
    max_err = float(np.max(np.abs(reconstructed - target)))
    if raise_on_fail and max_err > tol:
        raise ReconstructionError(
            f"representation round-trip missed tolerance: {max_err:.3e} > {tol:.1e}"
        )
    return TransformReport(tilde, times, reconstructed, target, max_err)
