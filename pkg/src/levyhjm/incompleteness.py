"""Numerical witness that jump densities break bond-market completeness.

The construction: around a point y0 where the jump density is positive,
nested balls B(y0, eps_n) with eps_n = eps_1 2^{-(n-1)} all carry mass, so
the alternating function

    g(y) = +(|y| /\\ 1) outside B(y0, eps_1), at y0, and on odd annuli,
           -(|y| /\\ 1) on even annuli

is a legitimate jump integrand whose stopped compensated integral is a
bounded claim.  No finite bond portfolio can replicate it: bond jump
exposures y -> P^ (e^{-Sigma y} - 1) are smooth in y, and pairing points
from consecutive annuli makes |g(a) - g(b)| stay near 2(|y0| /\\ 1) while
|h(a) - h(b)| collapses with the annulus radius — the certificate ratios
below blow up geometrically.  Hedging the claim therefore hits a residual
floor that basis refinement cannot push down, unlike a traded-bond control
claim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, parallel
from .errors import (
    DegenerateStopError,
    DomainError,
    NotConcentratedError,
)
from .hedging import (
    ClaimRepresentation,
    HedgeBasis,
    HedgeReport,
    _report_from_moments,
    bond_claim,
    hedge_moments,
)
from .integrands import GeneralIntegrand
from .jump_calculus import compensator_rate, ensure_class
from .market import HjmModel, _single_path_batch, evolve_discounted_chunk
from .measures import LevyMeasure
from .paths import LevyPath, simulate_batch, simulate_path
from .rng import RngStream
from .sets import RealSet


@dataclass(frozen=True)
class ConcentrationWitness:
    """y0 plus a halving radius sequence whose annuli all carry mass."""

    y0: float
    epsilons: np.ndarray  # (2K+3,) strictly decreasing
    annulus_masses: np.ndarray  # (2K+2,) nu(B(y0, eps_n) \\ B(y0, eps_{n+1}))
    measure: LevyMeasure

    @property
    def n_annuli(self) -> int:
        return self.annulus_masses.shape[0]

    def annulus(self, n: int) -> RealSet:
        """Annulus n (1-based): eps_{n+1} < |y - y0| <= eps_n."""
        if not 1 <= n <= self.n_annuli:
            raise DomainError(f"annulus index {n} out of range")
        return RealSet.annulus(self.y0, self.epsilons[n - 1], self.epsilons[n])


def find_concentration_witness(
    measure: LevyMeasure, y0: float, K: int = 4, eps1: float | None = None
) -> ConcentrationWitness:
    """Verify y0 concentrates the measure: 2K + 2 halving annuli all carry mass.

    Raises :class:`NotConcentratedError` on the first empty annulus — for a
    purely atomic measure every thin enough annulus around y0 misses all
    mass, which is exactly why the construction needs a density.
    """
    if y0 == 0.0:
        raise DomainError("the witness point must be away from zero")
    if K < 1:
        raise DomainError("need at least one annulus pair")
    if eps1 is None:
        eps1 = min(0.25, abs(y0) / 2.0)
    if eps1 <= 0 or eps1 >= abs(y0):
        raise DomainError("eps1 must be positive and keep the ball away from zero")
    n_eps = 2 * K + 3
    eps = eps1 * 0.5 ** np.arange(n_eps)
    masses = np.empty(n_eps - 1)
    for n in range(1, n_eps):
        region = RealSet.annulus(y0, eps[n - 1], eps[n])
        masses[n - 1] = measure.mass(region)
        if masses[n - 1] <= 0.0:
            raise NotConcentratedError(
                f"annulus {n} around y0={y0} (radii {eps[n]:.3g}..{eps[n - 1]:.3g}) "
                "carries no mass"
            )
    return ConcentrationWitness(float(y0), eps, masses, measure)


@dataclass(frozen=True)
class CounterexampleG:
    """The alternating capped integrand built on a concentration witness."""

    witness: ConcentrationWitness

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        eps = self.witness.epsilons
        d = np.abs(y - self.witness.y0)
        # count radii strictly below d; annulus index n = len(eps) - count
        below = np.searchsorted(eps[::-1], d, side="left")
        n = eps.shape[0] - below
        sign = np.where((n == 0) | (n == eps.shape[0]) | (n % 2 == 1), 1.0, -1.0)
        return sign * np.minimum(np.abs(y), 1.0)

    def as_integrand(self) -> GeneralIntegrand:
        kinks = [-1.0, 1.0]
        for e in self.witness.epsilons:
            kinks.extend((self.witness.y0 - e, self.witness.y0 + e))
        return GeneralIntegrand(
            fn=lambda s, y: self(y),
            time_homogeneous=True,
            name="alternating-capped",
            kink_points=tuple(sorted(kinks)),
        )


@dataclass
class StoppedClaimStats:
    k0: float
    frac_stopped: float
    mean_tau: float
    max_abs_payoff: float
    n_paths: int
    master_seed: int


def build_counterexample_claim(
    gfun: CounterexampleG, model: HjmModel, k0: float = 2.0
) -> ClaimRepresentation:
    """X = value of int int g d pi~_Q at tau_{k0}, the first time |.| reaches k0.

    Jump increments of the running integral are capped at 1 in magnitude, so
    |X| <= k0 + 1 pathwise.  The claim evaluator scans grid and jump times
    (with the compensator interpolated at the jumps) for the stop.
    """
    if k0 <= 0:
        raise DegenerateStopError("k0 must be positive: tau would be 0 on every path")
    g = gfun.as_integrand()
    if model.measure is None:
        raise DomainError("the construction needs a jump measure")
    ensure_class(g, model.measure, model.pair.psi, "psi12", 1.0)
    kappa = compensator_rate(g, model.measure, model.pair.psi, 0.0)

    def evaluate(mdl: HjmModel, batch) -> np.ndarray:
        vals = gfun(batch.jump_sizes)
        comp_grid = kappa * batch.grid
        xs, _, _ = kernels.stopped_compensated_scan(
            batch.grid, batch.jump_times, vals, batch.offsets, comp_grid, k0
        )
        return xs

    return ClaimRepresentation(
        name=f"stopped-alternating(k0={k0})",
        m0=0.0,
        evaluate_batch=evaluate,
        g_j=g,  # pre-stop integrand; the truncation at tau_{k0} is path-dependent
    )


def stopping_summary(
    gfun: CounterexampleG,
    model: HjmModel,
    grid: np.ndarray,
    k0: float,
    n_paths: int,
    master_seed: int,
    threads: int | None = None,
) -> StoppedClaimStats:
    """Pilot statistics for choosing k0 (fraction of paths that ever stop)."""
    g = gfun.as_integrand()
    kappa = compensator_rate(g, model.measure, model.pair.psi, 0.0)
    triplet = model.triplet()

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, master_seed, first, count)
        vals = gfun(batch.jump_sizes)
        xs, taus, stopped = kernels.stopped_compensated_scan(
            batch.grid, batch.jump_times, vals, batch.offsets, kappa * batch.grid, k0
        )
        return {"x": xs, "tau": taus, "stopped": stopped.astype(float)}

    res = parallel.sweep(per_chunk, n_paths, threads)
    return StoppedClaimStats(
        k0=k0,
        frac_stopped=float(res["stopped"].mean()),
        mean_tau=float(res["tau"].mean()),
        max_abs_payoff=float(np.max(np.abs(res["x"]))),
        n_paths=n_paths,
        master_seed=master_seed,
    )


# ----------------------------------------------------------------------
# the moment certificate


@dataclass
class MarketSnapshot:
    """Bond state P^(t-, T) and Sigma(t, T) over a maturity grid, at one (path, t)."""

    t: float
    maturities: np.ndarray
    phat: np.ndarray
    sigma_int: np.ndarray


def market_snapshot(model: HjmModel, path: LevyPath, t: float, maturities) -> MarketSnapshot:
    maturities = np.atleast_1d(np.asarray(maturities, dtype=float))
    grid = path.grid
    idx = int(np.searchsorted(grid, t))
    if idx >= grid.shape[0] or abs(grid[idx] - t) > 1e-12:
        raise DomainError("snapshot time must lie on the path's grid")
    phat = evolve_discounted_chunk(
        _single_path_batch(path), model, maturities, keep=np.array([idx])
    )[0, 0]
    sig = np.asarray(model.vol.sigma_integral(t, maturities), dtype=float)
    return MarketSnapshot(float(t), maturities, phat, sig)


def _bisect_mass(measure: LevyMeasure, lo: float, hi: float, target: float) -> float:
    """Bisect for m in [lo, hi] with mass(lo, m] = target."""
    a, b = lo, hi
    for _ in range(64):
        mid = 0.5 * (a + b)
        if measure.mass(RealSet.interval(lo, mid, False, True)) < target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def annulus_probe(witness: ConcentrationWitness, n: int) -> float:
    """Deterministic probe: the mass-weighted median of annulus n under nu.

    The annulus is the union of two intervals; the median is taken through
    the combined CDF, so it lands inside whichever piece holds the half-mass
    point (the lower piece first).
    """
    e_out, e_in = witness.epsilons[n - 1], witness.epsilons[n]
    y0 = witness.y0
    measure = witness.measure
    m_lower = measure.mass(RealSet.interval(y0 - e_out, y0 - e_in, True, False))
    target = witness.annulus_masses[n - 1] / 2.0
    if m_lower >= target:
        return _bisect_mass(measure, y0 - e_out, y0 - e_in, target)
    return _bisect_mass(measure, y0 + e_in, y0 + e_out, target - m_lower)


@dataclass
class MomentCertificate:
    snapshot_t: float
    probes: np.ndarray  # (n_pairs, 2)
    lhs: np.ndarray  # |g(a) - g(b)| per pair
    rhs: np.ndarray  # sup_T P^ |e^{-Sigma a} - e^{-Sigma b}|
    ratios: np.ndarray
    mvt_bounds: np.ndarray  # mean-value upper bounds for rhs
    k_min: int  # ratios strictly increase from this index on (1-based)

    def growth(self) -> float:
        return float(self.ratios[-1] / self.ratios[0])

    def rows(self):
        for k in range(self.lhs.shape[0]):
            yield {
                "pair": k + 1,
                "probe_a": float(self.probes[k, 0]),
                "probe_b": float(self.probes[k, 1]),
                "lhs": float(self.lhs[k]),
                "rhs": float(self.rhs[k]),
                "ratio": float(self.ratios[k]),
                "mvt_bound": float(self.mvt_bounds[k]),
            }


def moment_certificate(
    gfun: CounterexampleG, snapshot: MarketSnapshot, n_pairs: int
) -> MomentCertificate:
    """Pair consecutive annuli and compare the claim's jump spread with the
    bonds': the ratios grow like 4^k because the probes collapse onto y0
    while g keeps alternating at full amplitude."""
    witness = gfun.witness
    if 2 * n_pairs > witness.n_annuli:
        raise DomainError("witness does not store enough annuli for n_pairs")
    probes = np.empty((n_pairs, 2))
    lhs = np.empty(n_pairs)
    rhs = np.empty(n_pairs)
    mvt = np.empty(n_pairs)
    sig = snapshot.sigma_int
    phat = snapshot.phat
    for k in range(n_pairs):
        a = annulus_probe(witness, 2 * k + 1)
        b = annulus_probe(witness, 2 * k + 2)
        probes[k] = (a, b)
        lhs[k] = abs(float(gfun(a)) - float(gfun(b)))
        diff = phat * np.abs(np.exp(-sig * a) - np.exp(-sig * b))
        rhs[k] = float(np.max(diff))
        y_max = max(abs(a), abs(b))
        mvt[k] = float(np.max(phat * np.abs(sig) * np.exp(np.abs(sig) * y_max))) * abs(a - b)
    ratios = lhs / rhs
    k_min = n_pairs
    for k in range(n_pairs - 1, 0, -1):
        if ratios[k] > ratios[k - 1]:
            k_min = k
        else:
            break
    return MomentCertificate(snapshot.t, probes, lhs, rhs, ratios, mvt, k_min)


# ----------------------------------------------------------------------
# the full experiment


@dataclass
class IncompletenessReport:
    witness: ConcentrationWitness
    k0: float
    certificates: list
    levels: list  # per level: dict with basis meta
    counterexample_residuals: np.ndarray
    control_residuals: np.ndarray
    separation: float
    counterexample_reports: list
    control_reports: list

    def worst_certificate(self) -> "MomentCertificate":
        return min(self.certificates, key=lambda c: c.growth())

    def as_dict(self) -> dict:
        cert = self.worst_certificate()
        return {
            "y0": self.witness.y0,
            "epsilons": self.witness.epsilons.tolist(),
            "annulus_masses": self.witness.annulus_masses.tolist(),
            "k0": self.k0,
            "lhs": cert.lhs.tolist(),
            "rhs": cert.rhs.tolist(),
            "ratio": cert.ratios.tolist(),
            "k_min": cert.k_min,
            "certificate_growth_min": cert.growth(),
            "certificate_snapshots": [c.snapshot_t for c in self.certificates],
            "levels": self.levels,
            "residuals_by_level": {
                "counterexample": self.counterexample_residuals.tolist(),
                "control": self.control_residuals.tolist(),
            },
            "separation": self.separation,
        }


def _level_basis(
    t_star: float, t_max: float, n_maturities: int, n_buckets: int
) -> HedgeBasis:
    mats = t_star + (t_max - t_star) * np.arange(1, n_maturities + 1) / n_maturities
    return HedgeBasis(maturities=tuple(float(m) for m in mats), n_buckets=n_buckets)


def _aggregation_matrix(fine: HedgeBasis, coarse: HedgeBasis) -> np.ndarray:
    """0/1 matrix S with gains_coarse = gains_fine @ S, for nested dyadic bases.

    Coarse maturities are a subset of the fine ones and each coarse time
    bucket is a union of fine buckets, so every coarse basis column is an
    exact sum of fine columns and the aggregated normal equations coincide
    with the ones a dedicated sweep would build.
    """
    r = fine.n_buckets // coarse.n_buckets
    if r * coarse.n_buckets != fine.n_buckets:
        raise DomainError("bucket counts are not nested")
    s = np.zeros((fine.size, coarse.size))
    fine_mats = np.asarray(fine.maturities)
    for k_c, m in enumerate(coarse.maturities):
        k_f = int(np.argmin(np.abs(fine_mats - m)))
        if abs(fine_mats[k_f] - m) > 1e-12:
            raise DomainError("coarse maturity missing from the fine basis")
        for b_f in range(fine.n_buckets):
            s[k_f * fine.n_buckets + b_f, k_c * coarse.n_buckets + b_f // r] = 1.0
    return s


def incompleteness_experiment(
    model: HjmModel,
    grid: np.ndarray,
    y0: float,
    k0: float,
    n_paths: int,
    master_seed: int,
    eps1: float | None = None,
    K: int = 6,
    t_max: float | None = None,
    base_maturities: int = 2,
    base_buckets: int = 2,
    n_levels: int = 3,
    n_snapshots: int = 10,
    threads: int | None = None,
) -> IncompletenessReport:
    """Hedge the stopped alternating claim and a traded-bond control across
    nested bases, and evaluate the moment certificate on snapshot states.

    The bases double both the maturity count and the time buckets per level
    (dyadic, so each level's span contains the previous one).  The control
    claim is the bond at the longest maturity, traded at every level.
    """
    t_star = float(grid[-1])
    t_max = 1.5 * t_star if t_max is None else float(t_max)
    witness = find_concentration_witness(model.measure, y0, K, eps1)
    gfun = CounterexampleG(witness)
    claim = build_counterexample_claim(gfun, model, k0)
    control = bond_claim(t_max)

    n_pairs = K + 1  # pair up every stored annulus
    certificates = []
    n_steps = grid.shape[0] - 1
    for s in range(n_snapshots):
        path = simulate_path(model.triplet(), grid, RngStream(master_seed, s))
        t = float(grid[max(1, ((s + 1) * n_steps) // (n_snapshots + 1))])
        snap = market_snapshot(model, path, t, np.linspace(t_star, t_max, 9))
        certificates.append(moment_certificate(gfun, snap, n_pairs))

    # One sweep at the finest basis; every coarser level's normal equations
    # follow by exact column aggregation (the dyadic bases are nested).
    fine = _level_basis(
        t_star, t_max, base_maturities * 2 ** (n_levels - 1), base_buckets * 2 ** (n_levels - 1)
    )
    mom = hedge_moments([claim, control], model, grid, fine, n_paths, master_seed, threads)

    counter_reports: list[HedgeReport] = []
    control_reports: list[HedgeReport] = []
    levels = []
    for lev in range(n_levels):
        basis = _level_basis(
            t_star, t_max, base_maturities * 2**lev, base_buckets * 2**lev
        )
        s = _aggregation_matrix(fine, basis)
        s_g = s.T @ mom["s_g"]
        s_gg = s.T @ mom["s_gg"] @ s
        for i, (cl, out) in enumerate(((claim, counter_reports), (control, control_reports))):
            out.append(
                _report_from_moments(
                    cl.name,
                    basis,
                    mom["s_rho"],
                    float(mom["s_x"][i]),
                    float(mom["s_xx"][i]),
                    s_g,
                    s.T @ mom["s_gx"][i],
                    s_gg,
                    1e-8,
                    1e12,
                    n_paths,
                    master_seed,
                )
            )
        levels.append(
            {
                "maturities": list(basis.maturities),
                "n_buckets": basis.n_buckets,
                "counterexample_residual": counter_reports[-1].residual_l2,
                "control_residual": control_reports[-1].residual_l2,
            }
        )
    counter_res = np.array([r.residual_l2 for r in counter_reports])
    control_res = np.array([r.residual_l2 for r in control_reports])
    separation = float(counter_res[-1] / control_res[-1])
    return IncompletenessReport(
        witness=witness,
        k0=k0,
        certificates=certificates,
        levels=levels,
        counterexample_residuals=counter_res,
        control_residuals=control_res,
        separation=separation,
        counterexample_reports=counter_reports,
        control_reports=control_reports,
    )
