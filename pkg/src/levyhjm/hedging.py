"""Bond portfolios, wealth dynamics and least-squares hedging.

A portfolio holds quantities c_k(s) of the bonds with maturities T_k (a
finite Dirac combination over the maturity axis).  Its discounted wealth
follows

    dX^ = - <c, P^_{s-} Sigma_s> dW~ + int <c, P^_{s-} (e^{-Sigma y} - 1)> d pi~_Q

which the scheme advances per grid step with coefficients frozen at the left
point and the jump factors applied at the exact jump times, chaining earlier
jumps in the same cell into the left limit P^(tau-).

Hedging minimizes the rho-weighted empirical second moment of X - X^(T*)
over a basis of bucketed buy-and-hold strategies; all Monte Carlo reductions
are ordered sums over fixed-size chunks, so results are independent of the
thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import kernels, parallel
from .errors import ClassError, DomainError, MaturityError, SingularityError
from .girsanov import density_grid_batch, density_terminal_batch
from .integrands import GeneralIntegrand
from .jump_calculus import _compensator_on_grid, ensure_class
from .market import DriftTable, HjmModel, drift_table, evolve_discounted_chunk, _single_path_batch
from .paths import LevyPath, PathBatch, simulate_batch


@dataclass
class Portfolio:
    """Quantities c_k(s) held in the bonds with maturities T_k."""

    maturities: np.ndarray
    coeffs: Callable | np.ndarray  # c(s) -> (K,), or a constant vector

    def __post_init__(self):
        self.maturities = np.atleast_1d(np.asarray(self.maturities, dtype=float))
        if np.any(np.diff(self.maturities) <= 0):
            raise MaturityError("portfolio maturities must be strictly increasing")

    def coeff_at(self, s: float) -> np.ndarray:
        if callable(self.coeffs):
            c = np.asarray(self.coeffs(float(s)), dtype=float)
        else:
            c = np.asarray(self.coeffs, dtype=float)
        if c.shape != self.maturities.shape:
            raise DomainError("coefficient vector does not match the maturity count")
        return c


@dataclass
class ClaimRepresentation:
    """A discounted claim with its (supplied) tilted-measure representation.

    ``evaluate_batch(model, batch) -> (n_paths,)`` prices the payoff pathwise;
    ``f_w`` and ``g_j`` are the Brownian and jump representation integrands
    (either may be None when that part vanishes).
    """

    name: str
    m0: float
    evaluate_batch: Callable
    f_w: Callable | None = None
    g_j: GeneralIntegrand | None = None

    def f_at(self, s: float) -> float:
        return float(self.f_w(s)) if self.f_w is not None else 0.0

    def validate(self, model: HjmModel, horizon: float) -> None:
        if self.g_j is not None and model.measure is not None:
            ensure_class(self.g_j, model.measure, model.pair.psi, "psi12", horizon)
        if self.f_w is not None:
            probes = np.linspace(0.0, horizon, 17)
            vals = np.array([self.f_at(float(s)) for s in probes])
            if not np.all(np.isfinite(vals)):
                raise ClassError("Brownian integrand is not finite on the horizon")


# ----------------------------------------------------------------------
# claim registry


def constant_claim(value: float) -> ClaimRepresentation:
    return ClaimRepresentation(
        name=f"constant({value})",
        m0=float(value),
        evaluate_batch=lambda model, batch: np.full(batch.n_paths, float(value)),
    )


def bond_claim(maturity: float) -> ClaimRepresentation:
    """Discounted payoff of the T-bond held to the end of the horizon."""

    def evaluate(model: HjmModel, batch: PathBatch) -> np.ndarray:
        last = np.array([batch.grid.shape[0] - 1])
        return evolve_discounted_chunk(batch, model, [maturity], keep=last)[:, 0, 0]

    return ClaimRepresentation(
        name=f"bond({maturity})", m0=math.nan, evaluate_batch=evaluate
    )


def jump_integral_claim(g: GeneralIntegrand, name: str | None = None) -> ClaimRepresentation:
    """X = int_0^{T*} int g d pi~_Q — the model claim with a known representation."""

    def evaluate(model: HjmModel, batch: PathBatch) -> np.ndarray:
        if batch.jump_times.shape[0]:
            if g.time_homogeneous:
                vals = np.asarray(g(0.0, batch.jump_sizes), dtype=float)
            else:
                vals = np.array(
                    [
                        float(np.asarray(g(float(t), np.asarray([y])), dtype=float).ravel()[0])
                        for t, y in zip(batch.jump_times, batch.jump_sizes)
                    ]
                )
            sums = kernels.segment_sums(vals, batch.offsets)
        else:
            sums = np.zeros(batch.n_paths)
        comp, _ = _compensator_on_grid(g, model.measure, model.pair.psi, batch.grid)
        return sums - comp[-1]

    return ClaimRepresentation(
        name=name or f"jump_integral({g.name})",
        m0=0.0,
        evaluate_batch=evaluate,
        g_j=g,
    )


CLAIM_KINDS = {
    "constant": lambda cfg: constant_claim(cfg["value"]),
    "bond": lambda cfg: bond_claim(cfg["maturity"]),
}


# ----------------------------------------------------------------------
# wealth dynamics


def _wealth_increments(
    model: HjmModel, batch: PathBatch, tbl: DriftTable
) -> np.ndarray:
    """Per-step wealth gain of holding one unit of each bond: (n_paths, n_steps, K)."""
    grid = batch.grid
    n_steps = grid.shape[0] - 1
    keep = np.arange(n_steps)  # left values P^(t_i, T_k)
    phat = evolve_discounted_chunk(batch, model, tbl.maturities, keep=keep, table=tbl)
    dw_tilde = np.diff(batch.w, axis=1) - model.q * (tbl.phi_bar * tbl.dt)[None, :]
    out = np.empty((batch.n_paths, n_steps, tbl.maturities.shape[0]))
    if batch.jump_times.shape[0]:
        step_of_jump = np.clip(
            np.searchsorted(grid, batch.jump_times, side="left") - 1, 0, n_steps - 1
        )
        cell_keys = batch.path_index_per_jump * n_steps + step_of_jump
        prior = kernels.segmented_prior_cumsum(cell_keys, batch.jump_sizes[:, None])[:, 0]
    for k in range(tbl.maturities.shape[0]):
        sig = tbl.sigma_int[:, k][None, :]
        cont = -phat[:, :, k] * (sig * dw_tilde + (tbl.kappa_jump[:, k] * tbl.dt)[None, :])
        if batch.jump_times.shape[0]:
            sig_j = tbl.sigma_int[step_of_jump, k]
            p_left = phat[batch.path_index_per_jump, step_of_jump, k] * np.exp(-sig_j * prior)
            jump_vals = p_left * np.expm1(-sig_j * batch.jump_sizes)
            cum = kernels.cumulative_jump_sums(grid, batch.jump_times, jump_vals, batch.offsets)
            cont = cont + np.diff(cum, axis=1)
        out[:, :, k] = cont
    return out


def wealth_grid_batch(
    portfolio: Portfolio,
    model: HjmModel,
    batch: PathBatch,
    x0: float = 0.0,
    table: DriftTable | None = None,
) -> np.ndarray:
    """Discounted wealth at the grid times, (n_paths, n_grid)."""
    tbl = table if table is not None else drift_table(model, batch.grid, portfolio.maturities)
    if tbl.maturities.shape != portfolio.maturities.shape or np.any(
        tbl.maturities != portfolio.maturities
    ):
        raise MaturityError("drift table maturities do not match the portfolio")
    incr = _wealth_increments(model, batch, tbl)
    coeff = np.vstack([portfolio.coeff_at(float(s)) for s in batch.grid[:-1]])  # (n_steps, K)
    gains = np.einsum("pik,ik->pi", incr, coeff)
    out = np.empty((batch.n_paths, batch.grid.shape[0]))
    out[:, 0] = x0
    out[:, 1:] = x0 + np.cumsum(gains, axis=1)
    return out


def wealth_path(
    portfolio: Portfolio,
    model: HjmModel,
    path: LevyPath,
    x0: float = 0.0,
    table: DriftTable | None = None,
) -> np.ndarray:
    """Single-path wealth at grid times (X^_0 = x0)."""
    return wealth_grid_batch(portfolio, model, _single_path_batch(path), x0, table)[0]


@dataclass
class WealthMartingaleReport:
    checkpoints: np.ndarray
    estimates: np.ndarray
    ses: np.ndarray
    x0: float
    worst_z: float


def wealth_martingale_check(
    portfolio: Portfolio,
    model: HjmModel,
    grid: np.ndarray,
    checkpoints,
    n_paths: int,
    master_seed: int,
    x0: float = 0.0,
    threads: int | None = None,
) -> WealthMartingaleReport:
    """Admissibility diagnostic: rho-weighted mean of X^ is flat in t."""
    from .market import _grid_indices

    kidx = _grid_indices(grid, checkpoints)
    triplet = model.triplet()
    tbl = drift_table(model, grid, portfolio.maturities)

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, master_seed, first, count)
        rho = density_grid_batch(model.pair, batch)[:, kidx]
        wealth = wealth_grid_batch(portfolio, model, batch, x0, tbl)[:, kidx]
        return {"x": rho * wealth}

    res = parallel.sweep(per_chunk, n_paths, threads)
    x = res["x"]
    est = x.mean(axis=0)
    ses = x.std(axis=0, ddof=1) / np.sqrt(n_paths)
    worst = float(np.max(np.abs(est - x0) / ses))
    return WealthMartingaleReport(np.asarray(grid)[kidx], est, ses, x0, worst)


# ----------------------------------------------------------------------
# replication equations


@dataclass
class ReplicationResidualReport:
    s: float
    probes: np.ndarray
    brownian_residual: float
    jump_residuals: np.ndarray

    def max_jump_residual(self) -> float:
        return float(np.max(self.jump_residuals)) if self.jump_residuals.size else 0.0


def replication_equations_residual(
    portfolio: Portfolio,
    model: HjmModel,
    claim: ClaimRepresentation,
    path: LevyPath,
    s: float,
    probe_ys,
) -> ReplicationResidualReport:
    """Pointwise residuals of the two replication equations at time s.

    Brownian: <c, P^(s-) Sigma(s)> + f_X(s) = 0 (the hedge term enters the
    wealth with a minus sign); jump: <c, P^(s-) (e^{-Sigma y} - 1)> = g_X(s, y)
    at each probe y.  s must be a grid point; the state P^(s-) is the scheme
    value at s (jumps exactly at s are a null event).
    """
    grid = path.grid
    idx = int(np.searchsorted(grid, s))
    if idx >= grid.shape[0] or abs(grid[idx] - s) > 1e-12:
        raise DomainError("probe time s must lie on the path's grid")
    batch = _single_path_batch(path)
    phat = evolve_discounted_chunk(batch, model, portfolio.maturities, keep=np.array([idx]))[0, 0]
    sig = np.asarray(model.vol.sigma_integral(s, portfolio.maturities), dtype=float)
    c = portfolio.coeff_at(s)
    brown = abs(float(np.dot(c, phat * sig)) + claim.f_at(s))
    probe_ys = np.atleast_1d(np.asarray(probe_ys, dtype=float))
    lhs = np.expm1(-np.outer(probe_ys, sig)) @ (c * phat)
    if claim.g_j is not None:
        rhs = np.asarray(claim.g_j(s, probe_ys), dtype=float)
    else:
        rhs = np.zeros_like(probe_ys)
    return ReplicationResidualReport(float(s), probe_ys, brown, np.abs(lhs - rhs))


# ----------------------------------------------------------------------
# least-squares hedging


@dataclass(frozen=True)
class HedgeBasis:
    """Buy-and-hold indicators: one coefficient per (maturity, time bucket)."""

    maturities: tuple
    n_buckets: int

    def __post_init__(self):
        mats = tuple(float(m) for m in self.maturities)
        if any(b <= a for a, b in zip(mats, mats[1:])) or not mats:
            raise MaturityError("basis maturities must be strictly increasing")
        if self.n_buckets < 1:
            raise DomainError("need at least one time bucket")
        object.__setattr__(self, "maturities", mats)

    @property
    def size(self) -> int:
        return len(self.maturities) * self.n_buckets

    def bucket_edges(self, t_star: float) -> np.ndarray:
        return np.linspace(0.0, t_star, self.n_buckets + 1)

    def bucket_of_steps(self, grid: np.ndarray) -> np.ndarray:
        edges = self.bucket_edges(float(grid[-1]))
        return np.clip(
            np.searchsorted(edges, grid[:-1], side="right") - 1, 0, self.n_buckets - 1
        )


@dataclass
class HedgeReport:
    claim_name: str
    basis: HedgeBasis
    cost: float
    coeffs: np.ndarray  # (K, B)
    residual_l2: float
    residual_mean: float
    residual_var: float
    claim_l2: float
    cond: float
    reg: float
    gram: np.ndarray
    rhs: np.ndarray
    n_paths: int
    master_seed: int

    def as_dict(self) -> dict:
        return {
            "claim": self.claim_name,
            "maturities": list(self.basis.maturities),
            "n_buckets": self.basis.n_buckets,
            "cost": self.cost,
            "coeffs": self.coeffs.tolist(),
            "residual_l2": self.residual_l2,
            "residual_mean": self.residual_mean,
            "residual_var": self.residual_var,
            "claim_l2": self.claim_l2,
            "cond": self.cond,
            "reg": self.reg,
            "n_paths": self.n_paths,
            "seed": self.master_seed,
        }


def hedge_moments(
    claims,
    model: HjmModel,
    grid: np.ndarray,
    basis: HedgeBasis,
    n_paths: int,
    master_seed: int,
    threads: int | None = None,
) -> dict:
    """One MC pass of the weighted moments behind the hedge normal equations.

    Several claims can share the sweep (the gains moments are claim-free);
    per-claim entries come back stacked in claim order.
    """
    triplet = model.triplet()
    maturities = np.asarray(basis.maturities)
    tbl = drift_table(model, grid, maturities)
    buckets = basis.bucket_of_steps(grid)
    dim = basis.size
    n_b = basis.n_buckets

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, master_seed, first, count)
        rho = density_terminal_batch(model.pair, batch)
        xs = [claim.evaluate_batch(model, batch) for claim in claims]
        incr = _wealth_increments(model, batch, tbl)  # (P, n_steps, K)
        gains = np.zeros((count, dim))
        for b in range(n_b):
            cols = buckets == b
            gains[:, b::n_b] = incr[:, cols, :].sum(axis=1)
        rg = rho[:, None] * gains
        return {
            "s_rho": np.array([[rho.sum()]]),
            "s_x": np.array([[np.dot(rho, x) for x in xs]]),
            "s_xx": np.array([[np.dot(rho, x * x) for x in xs]]),
            "s_g": rg.sum(axis=0)[None, :],
            "s_gx": np.stack([(rg * x[:, None]).sum(axis=0) for x in xs])[None, :],
            "s_gg": (gains.T @ rg).reshape(1, -1),
        }

    res = parallel.sweep(per_chunk, n_paths, threads)
    return {
        "s_rho": float(res["s_rho"].sum(axis=0)[0]),
        "s_x": res["s_x"].sum(axis=0),
        "s_xx": res["s_xx"].sum(axis=0),
        "s_g": res["s_g"].sum(axis=0),
        "s_gx": res["s_gx"].sum(axis=0),
        "s_gg": res["s_gg"].sum(axis=0).reshape(dim, dim),
    }


def _report_from_moments(
    claim_name: str,
    basis: HedgeBasis,
    s_rho: float,
    s_x: float,
    s_xx: float,
    s_g: np.ndarray,
    s_gx: np.ndarray,
    s_gg: np.ndarray,
    lam: float,
    cond_limit: float,
    n_paths: int,
    master_seed: int,
) -> HedgeReport:
    dim = basis.size
    # joint least squares over [1, gains]: the intercept is eliminated by
    # centering, which leaves the covariance Gram.  Self-normalized weights
    # (everything / sum of rho) make constant claims land exactly.
    mean_x = s_x / s_rho
    mean_g = s_g / s_rho
    gram = s_gg / s_rho - np.outer(mean_g, mean_g)
    rhs = s_gx / s_rho - mean_x * mean_g
    reg = lam * float(np.trace(gram)) / dim
    sys = gram + reg * np.eye(dim)
    cond = float(np.linalg.cond(sys))
    if not math.isfinite(cond) or cond > cond_limit:
        raise SingularityError(f"hedge normal equations are degenerate (cond {cond:.3e})")
    theta = scipy.linalg.solve(sys, rhs, assume_a="pos")
    cost = mean_x - float(theta @ mean_g)
    resid_sq = (
        (s_xx / s_rho - mean_x * mean_x)
        - 2.0 * float(theta @ rhs)
        + float(theta @ gram @ theta)
    )
    resid_mean = mean_x - cost - float(theta @ mean_g)
    resid_sq = max(resid_sq, 0.0)
    return HedgeReport(
        claim_name=claim_name,
        basis=basis,
        cost=cost,
        coeffs=theta.reshape(len(basis.maturities), basis.n_buckets),
        residual_l2=math.sqrt(resid_sq),
        residual_mean=resid_mean,
        residual_var=max(resid_sq - resid_mean * resid_mean, 0.0),
        claim_l2=math.sqrt(max(s_xx / s_rho, 0.0)),
        cond=cond,
        reg=reg,
        gram=gram,
        rhs=rhs,
        n_paths=n_paths,
        master_seed=master_seed,
    )


def least_squares_hedge(
    claim: ClaimRepresentation,
    model: HjmModel,
    grid: np.ndarray,
    basis: HedgeBasis,
    n_paths: int,
    master_seed: int,
    lam: float = 1e-8,
    threads: int | None = None,
    cond_limit: float = 1e12,
) -> HedgeReport:
    """Project the claim on the basis gains in the rho-weighted L² sense.

    Normal equations with Tikhonov term lam * (trace(Gram)/dim); the report
    carries Gram and the right-hand side so optimality can be re-checked
    against the quadratic objective.
    """
    mom = hedge_moments([claim], model, grid, basis, n_paths, master_seed, threads)
    return _report_from_moments(
        claim.name,
        basis,
        mom["s_rho"],
        float(mom["s_x"][0]),
        float(mom["s_xx"][0]),
        mom["s_g"],
        mom["s_gx"][0],
        mom["s_gg"],
        lam,
        cond_limit,
        n_paths,
        master_seed,
    )
