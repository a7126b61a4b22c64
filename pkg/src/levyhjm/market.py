"""Forward-rate market driven by one Lévy noise, in the risk-neutral form.

State is carried as G(t, T) = int_0^t r(s) ds + int_t^T f(t, u) du, so the
discounted bond price is exp(-G(t, T)) and the recursion

    G(t_{i+1}, T) = G(t_i, T) + A(t_i, T) dt + Sigma(t_i, T) dZ_i

needs no separate short-rate bookkeeping.  With the no-arbitrage drift

    A(s, T) = -Sigma a + q Sigma^2 / 2 - q phi Sigma
              + int ( e^psi (e^{-Sigma y} - 1) + 1_{|y|<=1} Sigma y ) nu(dy)

the left-point scheme is a martingale in the exact sense: conditionally on
the state at t_i, E_Q[exp(-dG)] = 1 (Gaussian moment and Poisson marking are
both exact), so the Monte Carlo drift check is testing the drift formula and
the measure change, not the discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, parallel
from .errors import DivergenceError, DomainError, MaturityError, MomentError
from .girsanov import GeneratingPair, density_grid_batch
from .measures import LevyMeasure, NullMeasure
from .paths import LevyPath, LevyTriplet, PathBatch, simulate_batch
from .sets import Interval, RealSet


@dataclass(frozen=True)
class VolatilitySpec:
    """Deterministic volatility families with closed-form maturity integrals."""

    kind: str = "constant"  # "constant" | "exp_decay"
    sigma0: float = 0.1
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "exp_decay"):
            raise DomainError(f"unknown volatility kind {self.kind!r}")
        if self.sigma0 <= 0:
            raise DomainError("sigma0 must be positive")
        if self.kind == "exp_decay" and self.beta <= 0:
            raise DomainError("exp_decay volatility needs beta > 0")

    def sigma(self, s, T):
        """sigma(s, T), zero once the bond has matured (T < s)."""
        s = np.asarray(s, dtype=float)
        T = np.asarray(T, dtype=float)
        tau = T - s
        alive = tau >= 0.0
        if self.kind == "constant":
            return np.where(alive, self.sigma0, 0.0)
        return np.where(alive, self.sigma0 * np.exp(-self.beta * np.maximum(tau, 0.0)), 0.0)

    def sigma_integral(self, s, T):
        """Sigma(s, T) = int_s^T sigma(s, v) dv, clamped at zero after maturity."""
        s = np.asarray(s, dtype=float)
        T = np.asarray(T, dtype=float)
        tau = np.maximum(T - s, 0.0)
        if self.kind == "constant":
            return self.sigma0 * tau
        return self.sigma0 / self.beta * (-np.expm1(-self.beta * tau))

    def as_dict(self):
        out = {"kind": self.kind, "sigma0": self.sigma0}
        if self.kind == "exp_decay":
            out["beta"] = self.beta
        return out


def vol_from_config(cfg: dict) -> VolatilitySpec:
    return VolatilitySpec(**cfg)


@dataclass(frozen=True)
class HjmModel:
    """Market data: volatility, pricing tilt, noise characteristics, flat initial curve."""

    vol: VolatilitySpec
    pair: GeneratingPair
    a: float
    q: float
    measure: LevyMeasure | None
    f0: float = 0.03

    def triplet(self) -> LevyTriplet:
        measure = NullMeasure() if self.measure is None else self.measure
        return LevyTriplet(a=self.a, q=self.q, measure=measure)

    def initial_discounted_price(self, T) -> np.ndarray:
        return np.exp(-self.f0 * np.asarray(T, dtype=float))


def _check_maturities(maturities) -> np.ndarray:
    m = np.atleast_1d(np.asarray(maturities, dtype=float))
    if m.size == 0 or np.any(~np.isfinite(m)) or np.any(m <= 0):
        raise MaturityError("maturities must be positive and finite")
    return m


def hjm_drift(model: HjmModel, s: float, T: float) -> float:
    """A(s, T) with the jump integral done by adaptive quadrature (reference)."""
    sig = float(model.vol.sigma_integral(s, T))
    val = -sig * model.a + 0.5 * model.q * sig * sig - model.q * float(model.pair.phi_at(s)) * sig
    if model.measure is not None:
        band = RealSet.interval(-1.0, 1.0, True, True)

        def fn(y):
            psi = float(model.pair.psi(s, np.asarray([y]))[0])
            return math.exp(psi) * math.expm1(-sig * y)

        val += model.measure.integrate(fn, points=model.pair.psi.kink_points)
        val += sig * model.measure.integrate(lambda y: y, band)
    return val


def hjm_alpha(model: HjmModel, s: float, T: float, h: float = 1e-3) -> float:
    """alpha(s, T) = dA/dT by a central difference.

    Exact (to rounding) whenever A is quadratic in T, e.g. the continuous
    part under constant volatility.  Keep T - s > h: the stencil must not
    cross the maturity clamp at T = s.
    """
    return (hjm_drift(model, s, T + h) - hjm_drift(model, s, T - h)) / (2.0 * h)


# ----------------------------------------------------------------------
# tabulated step coefficients


@dataclass
class DriftTable:
    """Per-step coefficients A, Sigma, jump compensator and phi averages."""

    grid: np.ndarray
    maturities: np.ndarray
    dt: np.ndarray  # (n_steps,)
    sigma_int: np.ndarray  # (n_steps, M) Sigma(t_i, T_j)
    a_drift: np.ndarray  # (n_steps, M) A(t_i, T_j) with step-averaged phi
    kappa_jump: np.ndarray  # (n_steps, M) int (e^{-Sigma y} - 1) e^psi nu(dy)
    phi_bar: np.ndarray  # (n_steps,) step averages of phi


def _phi_step_average(pair: GeneratingPair, grid: np.ndarray) -> np.ndarray:
    """Simpson average of phi over each step (exact for quadratics)."""
    lo, hi = grid[:-1], grid[1:]
    return (pair.phi_at(lo) + 4.0 * pair.phi_at(0.5 * (lo + hi)) + pair.phi_at(hi)) / 6.0


def _tilted_exp_integral(model: HjmModel, sig: np.ndarray, s: float = 0.0) -> np.ndarray:
    """int e^{psi(s, y)} (e^{-Sigma y} - 1) nu(dy) for an array of Sigma values."""
    if model.measure is None:
        return np.zeros_like(sig)
    ys, wts = model.measure.quadrature_nodes()
    tilted = wts * np.exp(np.asarray(model.pair.psi(s, ys), dtype=float))
    return np.expm1(-sig[..., None] * ys) @ tilted


def drift_table(model: HjmModel, grid: np.ndarray, maturities) -> DriftTable:
    maturities = _check_maturities(maturities)
    lefts = grid[:-1]
    dt = np.diff(grid)
    sig = model.vol.sigma_integral(lefts[:, None], maturities[None, :])
    phi_bar = _phi_step_average(model.pair, grid)
    if model.measure is None or model.pair.psi.time_homogeneous:
        kappa = _tilted_exp_integral(model, sig)
    else:
        kappa = np.vstack([_tilted_exp_integral(model, sig[i], float(s)) for i, s in enumerate(lefts)])
    c1 = model.measure.small_jump_mean() if model.measure is not None else 0.0
    a_drift = (
        -sig * model.a
        + 0.5 * model.q * sig * sig
        - model.q * phi_bar[:, None] * sig
        + kappa
        + sig * c1
    )
    return DriftTable(grid, maturities, dt, sig, a_drift, kappa, phi_bar)


# ----------------------------------------------------------------------
# evolution schemes


def evolve_discounted_chunk(
    batch: PathBatch,
    model: HjmModel,
    maturities,
    keep: np.ndarray | None = None,
    table: DriftTable | None = None,
    perturbation: float = 0.0,
) -> np.ndarray:
    """Discounted bond prices exp(-G) for a batch, (n_paths, n_keep, M).

    ``perturbation`` adds a constant to the drift A; nonzero values break the
    martingale property on purpose (the detection side of the drift check).
    """
    tbl = table if table is not None else drift_table(model, batch.grid, maturities)
    keep_idx = np.arange(batch.grid.shape[0]) if keep is None else np.asarray(keep, dtype=int)
    dz = np.diff(batch.z, axis=1)
    n_paths = batch.n_paths
    out = np.empty((n_paths, keep_idx.shape[0], tbl.maturities.shape[0]))
    g0 = model.f0 * tbl.maturities
    for j in range(tbl.maturities.shape[0]):
        incr = dz * tbl.sigma_int[:, j][None, :] + ((tbl.a_drift[:, j] + perturbation) * tbl.dt)[None, :]
        g = np.empty((n_paths, batch.grid.shape[0]))
        g[:, 0] = g0[j]
        np.cumsum(incr, axis=1, out=incr)
        g[:, 1:] = g0[j] + incr
        out[:, :, j] = np.exp(-g[:, keep_idx])
    return out


def sde_discounted_chunk(
    batch: PathBatch,
    model: HjmModel,
    maturities,
    keep: np.ndarray | None = None,
    table: DriftTable | None = None,
) -> np.ndarray:
    """Direct strong scheme for d P^ = P^_{s-} ( -Sigma dW~ + int (e^{-Sigma y} - 1) d pi~_Q ).

    Per step: second-order (Milstein) factor for the Wiener and compensator
    part, times the exact jump factors exp(-Sigma y) for the jumps that land
    in the step, with Sigma frozen at the step's left point exactly as in the
    exponential recursion — so the two schemes differ only in how the
    continuous part is advanced, and their gap shrinks at first order in dt.
    """
    tbl = table if table is not None else drift_table(model, batch.grid, maturities)
    keep_idx = np.arange(batch.grid.shape[0]) if keep is None else np.asarray(keep, dtype=int)
    grid = batch.grid
    dw_tilde = np.diff(batch.w, axis=1) - model.q * (tbl.phi_bar * tbl.dt)[None, :]
    n_paths = batch.n_paths
    out = np.empty((n_paths, keep_idx.shape[0], tbl.maturities.shape[0]))
    for j in range(tbl.maturities.shape[0]):
        sig = tbl.sigma_int[:, j][None, :]
        cont = (
            1.0
            - sig * dw_tilde
            - (tbl.kappa_jump[:, j] * tbl.dt)[None, :]
            + 0.5 * sig * sig * (dw_tilde * dw_tilde - model.q * tbl.dt[None, :])
        )
        if batch.jump_times.shape[0]:
            step_of_jump = np.clip(
                np.searchsorted(grid, batch.jump_times, side="left") - 1, 0, grid.shape[0] - 2
            )
            vals = batch.jump_sizes * tbl.sigma_int[step_of_jump, j]
            cum = kernels.cumulative_jump_sums(grid, batch.jump_times, vals, batch.offsets)
            jump_factor = np.exp(-np.diff(cum, axis=1))
        else:
            jump_factor = 1.0
        p = np.empty((n_paths, grid.shape[0]))
        p[:, 0] = math.exp(-model.f0 * tbl.maturities[j])
        p[:, 1:] = p[:, 0][:, None] * np.cumprod(cont * jump_factor, axis=1)
        out[:, :, j] = p[:, keep_idx]
    return out


# ----------------------------------------------------------------------
# martingale verification


@dataclass
class MartingaleReport:
    checkpoints: np.ndarray
    maturities: np.ndarray
    estimates: np.ndarray  # (K, M) E_P[rho_t P^(t, T)]
    ses: np.ndarray
    targets: np.ndarray  # (M,) P^(0, T)
    worst_z: float
    n_paths: int
    master_seed: int

    def zscores(self) -> np.ndarray:
        return (self.estimates - self.targets[None, :]) / self.ses

    def rows(self):
        for k, t in enumerate(self.checkpoints):
            for j, T in enumerate(self.maturities):
                yield {
                    "t": float(t),
                    "maturity": float(T),
                    "estimate": float(self.estimates[k, j]),
                    "se": float(self.ses[k, j]),
                    "target": float(self.targets[j]),
                    "z": float((self.estimates[k, j] - self.targets[j]) / self.ses[k, j]),
                }


def _grid_indices(grid: np.ndarray, times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.searchsorted(grid, times)
    idx = np.clip(idx, 0, grid.shape[0] - 1)
    if np.any(np.abs(grid[idx] - times) > 1e-12):
        raise DomainError("checkpoint times must lie on the simulation grid")
    return idx


def check_drift_martingale(
    model: HjmModel,
    grid: np.ndarray,
    maturities,
    checkpoints,
    n_paths: int,
    master_seed: int,
    perturbation: float = 0.0,
    threads: int | None = None,
) -> MartingaleReport:
    """E_Q[P^(t, T)] vs P^(0, T), with Q-expectations taken as rho-weighted
    P-averages at each checkpoint."""
    maturities = _check_maturities(maturities)
    kidx = _grid_indices(grid, checkpoints)
    triplet = model.triplet()
    tbl = drift_table(model, grid, maturities)

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, master_seed, first, count)
        rho = density_grid_batch(model.pair, batch)[:, kidx]
        phat = evolve_discounted_chunk(batch, model, maturities, keep=kidx, table=tbl,
                                       perturbation=perturbation)
        x = (rho[:, :, None] * phat).reshape(count, -1)
        # moment rows, not raw paths: a dense checkpoint set at 1e5 paths
        # would otherwise hold gigabytes
        return {"s1": x.sum(axis=0)[None, :], "s2": (x * x).sum(axis=0)[None, :]}

    res = parallel.sweep(per_chunk, n_paths, threads)
    s1 = res["s1"].sum(axis=0)
    s2 = res["s2"].sum(axis=0)
    k, m = kidx.shape[0], maturities.shape[0]
    est = (s1 / n_paths).reshape(k, m)
    var = np.maximum(s2 - n_paths * (s1 / n_paths) ** 2, 0.0) / (n_paths - 1)
    ses = (np.sqrt(var) / np.sqrt(n_paths)).reshape(k, m)
    targets = np.asarray(model.initial_discounted_price(maturities))
    worst = float(np.max(np.abs((est - targets[None, :]) / ses)))
    return MartingaleReport(
        np.asarray(grid)[kidx], maturities, est, ses, targets, worst, n_paths, master_seed
    )


# ----------------------------------------------------------------------
# scheme-gap convergence


@dataclass
class ConvergenceReport:
    dts: np.ndarray  # (L,) coarse -> fine
    mean_abs_gap: np.ndarray  # (L, M)
    ratios: np.ndarray  # (L-1,) aggregated over maturities
    n_paths: int
    master_seed: int

    def rows(self):
        for lev, dt in enumerate(self.dts):
            yield {
                "dt": float(dt),
                "mean_abs_gap": float(self.mean_abs_gap[lev].mean()),
                "ratio_to_prev": float(self.ratios[lev - 1]) if lev else float("nan"),
            }


def convergence_study(
    model: HjmModel,
    t_star: float,
    n_steps_coarse: int,
    n_levels: int,
    maturities,
    n_paths: int,
    master_seed: int,
    threads: int | None = None,
) -> ConvergenceReport:
    """Terminal gap between the strong scheme and the exponential recursion
    across dyadic step refinements, on shared randomness.

    Paths are simulated once on the finest grid; coarser levels reuse the
    same Wiener values and the same jumps, so the measured gaps are coupled
    and their ratios estimate the strong order directly.
    """
    maturities = _check_maturities(maturities)
    factors = [2 ** (n_levels - 1 - i) for i in range(n_levels)]  # coarse -> fine
    n_fine = n_steps_coarse * factors[0]
    fine_grid = np.linspace(0.0, t_star, n_fine + 1)
    triplet = model.triplet()
    tables = {f: drift_table(model, fine_grid[::f], maturities) for f in factors}

    def per_chunk(first, count):
        fine = simulate_batch(triplet, fine_grid, master_seed, first, count)
        gaps = []
        for f in factors:
            sub = fine.coarsen(f)
            last = np.array([sub.grid.shape[0] - 1])
            p_exp = evolve_discounted_chunk(sub, model, maturities, keep=last, table=tables[f])
            p_sde = sde_discounted_chunk(sub, model, maturities, keep=last, table=tables[f])
            gaps.append(np.abs(p_sde - p_exp)[:, 0, :])
        return {"gap": np.stack(gaps, axis=1).reshape(count, -1)}

    res = parallel.sweep(per_chunk, n_paths, threads)
    gap = res["gap"].mean(axis=0).reshape(len(factors), maturities.shape[0])
    agg = gap.mean(axis=1)
    ratios = agg[1:] / agg[:-1]
    dts = np.array([t_star / (n_fine / f) for f in factors])
    return ConvergenceReport(dts, gap, ratios, n_paths, master_seed)


# ----------------------------------------------------------------------
# single-path forward surface diagnostics


@dataclass
class ForwardSurface:
    """f(t_i, u_m) for one path, on a maturity grid that extends the time grid."""

    times: np.ndarray  # (n+1,)
    maturity_grid: np.ndarray  # (M+1,) same spacing, maturity_grid[:n+1] == times
    f: np.ndarray  # (n+1, M+1)
    model: HjmModel
    path: LevyPath

    def short_rate(self) -> np.ndarray:
        """r(t_i) = f(t_i, t_i), read off the surface diagonal exactly."""
        n = self.times.shape[0]
        return self.f[np.arange(n), np.arange(n)]

    def integrated_forward(self, i: int, T: float) -> float:
        """Trapezoid of f(t_i, u) du over [t_i, T] on the maturity grid."""
        cols = (self.maturity_grid >= self.times[i] - 1e-12) & (self.maturity_grid <= T + 1e-12)
        return float(np.trapezoid(self.f[i, cols], self.maturity_grid[cols]))


def evolve_forward_surface(model: HjmModel, path: LevyPath, t_max: float, fd_step: float = 1e-3) -> ForwardSurface:
    """Euler surface evolution f(t_{i+1}, u) = f + alpha(t_i, u) dt + sigma(t_i, u) dZ_i.

    alpha comes from the central difference of A in maturity; rates with
    u < t_i stop moving because sigma and alpha vanish past maturity, which
    leaves the short-rate history on the diagonal.
    """
    grid = path.grid
    dt_step = float(grid[1] - grid[0])
    if not np.allclose(np.diff(grid), dt_step):
        raise DomainError("surface evolution expects a uniform time grid")
    n_m = int(round(t_max / dt_step))
    if n_m * dt_step < path.t_star - 1e-12:
        raise MaturityError("t_max must reach the end of the time grid")
    mat = np.linspace(0.0, n_m * dt_step, n_m + 1)
    if not model.pair.psi.time_homogeneous:
        raise DomainError("surface evolution is implemented for time-homogeneous tilts")

    def a_row(s, tarr):
        sig = model.vol.sigma_integral(s, tarr)
        c1 = model.measure.small_jump_mean() if model.measure is not None else 0.0
        return (
            -sig * model.a
            + 0.5 * model.q * sig * sig
            - model.q * float(model.pair.phi_at(s)) * sig
            + _tilted_exp_integral(model, sig, float(s))
            + sig * c1
        )

    dz = np.diff(path.z)
    n = grid.shape[0]
    f = np.empty((n, n_m + 1))
    f[0] = model.f0
    for i in range(n - 1):
        s = float(grid[i])
        alpha = (a_row(s, mat + fd_step) - a_row(s, mat - fd_step)) / (2.0 * fd_step)
        sig_pt = model.vol.sigma(s, mat)
        f[i + 1] = f[i] + alpha * dt_step + sig_pt * dz[i]
    return ForwardSurface(grid, mat, f, model, path)


@dataclass
class ConsistencyReport:
    maturities: np.ndarray
    max_error: float
    errors: np.ndarray  # (n+1, M)


def surface_consistency(surface: ForwardSurface, maturities) -> ConsistencyReport:
    """Compare -ln P^(t, T) from the exponential recursion with the surface's
    trapezoid quadrature int_0^t r + int_t^T f(t, u) du.

    Agreement is second order in the step between jumps; the trapezoid rule
    crossing the short rate's jump discontinuities knocks it down to first
    order on paths that jump, so the gap still vanishes under refinement but
    the observed rate sits between 1 and 2."""
    maturities = _check_maturities(maturities)
    model, path = surface.model, surface.path
    batch_like = _single_path_batch(path)
    phat = evolve_discounted_chunk(batch_like, model, maturities)[0]  # (n+1, M)
    r = surface.short_rate()
    times = surface.times
    r_int = np.concatenate([[0.0], np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(times))])
    errors = np.empty((times.shape[0], maturities.shape[0]))
    for i in range(times.shape[0]):
        for j, T in enumerate(maturities):
            g_surface = r_int[i] + surface.integrated_forward(i, float(T))
            errors[i, j] = abs(-math.log(phat[i, j]) - g_surface)
    return ConsistencyReport(maturities, float(errors.max()), errors)


def _single_path_batch(path: LevyPath) -> PathBatch:
    return PathBatch(
        grid=path.grid,
        w=path.w[None, :],
        jump_times=path.jump_times,
        jump_sizes=path.jump_sizes,
        offsets=np.array([0, path.jump_times.shape[0]], dtype=np.int64),
        z=path.z[None, :],
        triplet=path.triplet,
        master_seed=path.stream.master_seed if path.stream else 0,
        first_index=path.stream.stream_index if path.stream else 0,
    )


# ----------------------------------------------------------------------
# moment guards


def check_martingale_conditions(model: HjmModel, maturities) -> dict:
    """Probe the exponential-moment requirements behind the drift formula.

    Checks int e^psi nu < inf (the measure change) and
    int_{|y|>1} e^{-Sigma y} e^psi nu < inf at the extreme Sigma values;
    failures raise :class:`MomentError` naming the failing probe.
    """
    maturities = _check_maturities(maturities)
    if model.measure is None:
        return {"sigma_max": 0.0, "probes": {}}
    sig_max = float(np.max(model.vol.sigma_integral(0.0, maturities)))
    probes = {}
    cases = {
        "tilted_mass": (0.0, 0.0),
        "exp_moment_sigma_max": (sig_max, 1.0),
        "exp_moment_sigma_zero": (0.0, 1.0),
    }
    # Integrate over growing bounded caps instead of straight to infinity:
    # an exponentially divergent tail fools adaptive quadrature once the
    # density underflows, but it cannot hide that the capped values keep
    # moving.  Jump mass beyond |y| = 4096 is treated as divergence.
    for name, (sig, inner) in cases.items():
        def fn(y, _sig=sig):
            with np.errstate(over="ignore"):
                val = np.exp(model.pair.psi(0.0, np.asarray([y]))[0] - _sig * y)
            return float(val)

        values = []
        for cap in (512.0, 4096.0):
            region = RealSet(
                intervals=(
                    Interval(-cap, -inner, True, True),
                    Interval(inner, cap, True, True),
                )
            )
            try:
                values.append(
                    model.measure.integrate(fn, region=region, points=model.pair.psi.kink_points)
                )
            except (DivergenceError, OverflowError) as exc:
                raise MomentError(f"moment probe {name!r} diverges: {exc}") from exc
            if not math.isfinite(values[-1]):
                raise MomentError(f"moment probe {name!r} is not finite")
        if abs(values[1] - values[0]) > 1e-9 * max(1.0, abs(values[1])):
            raise MomentError(f"moment probe {name!r} still accumulates mass in the far tail")
        probes[name] = values[1]
    return {"sigma_max": sig_max, "probes": probes}
