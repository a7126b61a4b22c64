"""Scenario files: TOML in, validated model objects out.

Every validation failure is a :class:`ScenarioError` carrying the dotted
TOML path of the offending key, so a bad file pinpoints itself.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ScenarioError, ValidationError
from .girsanov import TILT_KINDS, GeneratingPair
from .hedging import CLAIM_KINDS, ClaimRepresentation, HedgeBasis
from .integrands import FAMILIES as INTEGRAND_FAMILIES
from .integrands import GeneralIntegrand, scaled
from .market import HjmModel, vol_from_config
from .measures import LevyMeasure, measure_from_config
from .sets import RealSet

_TILT_PARAM = {"zero": None, "constant": "theta", "linear": "c"}

_REQUIRED = object()


def _get(table: dict, key: str, toml_path: str, kind=None, default=_REQUIRED):
    if key not in table:
        if default is _REQUIRED:
            raise ScenarioError(f"{toml_path}.{key}" if toml_path else key, "missing required key")
        return default
    val = table[key]
    if kind is not None:
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool):
            raise ScenarioError(
                f"{toml_path}.{key}", f"expected {kind.__name__}, got {type(val).__name__}"
            )
    return val


@dataclass
class IncompletenessConfig:
    y0: float
    eps1: float | None
    K: int
    k0: float
    n_levels: int
    t_max: float | None
    base_maturities: int = 2
    base_buckets: int = 2
    n_snapshots: int = 10


@dataclass
class Scenario:
    """A fully validated experiment description."""

    path: str
    raw: dict
    n_paths: int
    master_seed: int
    n_steps: int
    t_star: float
    out_dir: str
    emit_paths: int
    model: HjmModel
    maturities: np.ndarray
    isometry_integrands: list[GeneralIntegrand] = field(default_factory=list)
    hedge_claim: ClaimRepresentation | None = None
    hedge_basis: HedgeBasis | None = None
    hedge_lam: float = 1e-8
    incompleteness: IncompletenessConfig | None = None

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_star, self.n_steps + 1)

    def content_hash(self) -> str:
        """Hash of everything that determines the outputs (not the out dir)."""
        skim = dict(self.raw)
        run = dict(skim.get("run", {}))
        run.pop("out", None)
        run["n_paths"] = self.n_paths
        run["master_seed"] = self.master_seed
        skim["run"] = run
        blob = repr(sorted(_flatten(skim))).encode()
        return hashlib.sha256(blob).hexdigest()


def _flatten(table: dict, prefix: str = ""):
    for key in sorted(table):
        val = table[key]
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(val, dict):
            yield from _flatten(val, path)
        elif isinstance(val, list):
            if val and isinstance(val[0], dict):
                for i, item in enumerate(val):
                    yield from _flatten(item, f"{path}[{i}]")
            else:
                yield (path, tuple(val))
        else:
            yield (path, val)


def _build_pair(table: dict) -> GeneratingPair:
    phi = _get(table, "phi", "girsanov", float, 0.0)
    psi_table = _get(table, "psi", "girsanov", dict, {"kind": "zero"})
    kind = _get(psi_table, "kind", "girsanov.psi", str)
    if kind not in TILT_KINDS:
        raise ScenarioError("girsanov.psi.kind", f"unknown tilt {kind!r}; choose from {sorted(TILT_KINDS)}")
    param = _TILT_PARAM[kind]
    if param is None:
        psi = TILT_KINDS[kind]()
    else:
        psi = TILT_KINDS[kind](_get(psi_table, param, "girsanov.psi", float))
    return GeneratingPair(phi=phi, psi=psi)


def _build_integrand(table: dict, toml_path: str) -> GeneralIntegrand:
    kind = _get(table, "kind", toml_path, str)
    if kind not in INTEGRAND_FAMILIES:
        raise ScenarioError(
            f"{toml_path}.kind", f"unknown integrand {kind!r}; choose from {sorted(INTEGRAND_FAMILIES)}"
        )
    scale = _get(table, "scale", toml_path, float, 1.0)
    if kind == "capped_abs":
        g = INTEGRAND_FAMILIES[kind]()
    else:
        if "atom" in table:
            region = RealSet.atom(_get(table, "atom", toml_path, float))
        elif "lo" in table or "hi" in table:
            lo = _get(table, "lo", toml_path, float, -float("inf"))
            hi = _get(table, "hi", toml_path, float, float("inf"))
            if not lo < hi:
                raise ScenarioError(f"{toml_path}.lo", "need lo < hi")
            region = RealSet.interval(lo, hi)
        elif kind == "indicator":
            raise ScenarioError(toml_path, "indicator needs an 'atom' or a 'lo'/'hi' band")
        else:
            region = None
        g = INTEGRAND_FAMILIES[kind](region) if region is not None else INTEGRAND_FAMILIES[kind]()
    return scaled(g, scale) if scale != 1.0 else g


def load_scenario(
    path,
    seed: int | None = None,
    n_paths: int | None = None,
    out_dir: str | None = None,
) -> Scenario:
    """Parse, validate, and assemble one scenario file (CLI overrides win)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(str(path), "scenario file not found")
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(str(path), f"not valid TOML: {exc}")

    run = _get(raw, "run", "", dict, {})
    n_paths_val = n_paths if n_paths is not None else _get(run, "n_paths", "run", int, 10000)
    if n_paths_val < 1:
        raise ScenarioError("run.n_paths", "need at least one path")
    seed_val = seed if seed is not None else _get(run, "master_seed", "run", int, 0)
    if seed_val < 0:
        raise ScenarioError("run.master_seed", "seed must be non-negative")
    n_steps = _get(run, "n_steps", "run", int, 512)
    if n_steps < 2:
        raise ScenarioError("run.n_steps", "need at least two steps")
    t_star = _get(run, "t_star", "run", float, 1.0)
    if not 0.0 < t_star < float("inf"):
        raise ScenarioError("run.t_star", "horizon must be positive and finite")
    out_val = out_dir if out_dir is not None else _get(run, "out", "run", str, "out")
    emit_paths = _get(run, "emit_paths", "run", int, 8)
    if emit_paths < 0:
        raise ScenarioError("run.emit_paths", "must be non-negative")

    levy = _get(raw, "levy", "", dict)
    a = _get(levy, "a", "levy", float, 0.0)
    q = _get(levy, "q", "levy", float, 0.0)
    if q < 0:
        raise ScenarioError("levy.q", "diffusion coefficient must be non-negative")
    measure: LevyMeasure | None = None
    if "measure" in levy:
        try:
            measure = measure_from_config(_get(levy, "measure", "levy", dict))
        except (ValidationError, TypeError) as exc:
            raise ScenarioError("levy.measure", str(exc))
    if q == 0.0 and measure is None:
        raise ScenarioError("levy", "need a diffusion part or a jump measure")

    pair = _build_pair(_get(raw, "girsanov", "", dict, {}))

    market = _get(raw, "market", "", dict)
    try:
        vol = vol_from_config(_get(market, "vol", "market", dict))
    except (ValidationError, TypeError) as exc:
        raise ScenarioError("market.vol", str(exc))
    f0 = _get(market, "f0", "market", float, 0.03)
    maturities = np.asarray(_get(market, "maturities", "market", list), dtype=float)
    if maturities.size == 0 or np.any(maturities <= 0) or np.any(~np.isfinite(maturities)):
        raise ScenarioError("market.maturities", "must be positive and finite")
    if np.any(maturities < t_star):
        raise ScenarioError("market.maturities", "maturities inside the horizon are not traded")
    model = HjmModel(vol=vol, pair=pair, a=a, q=q, measure=measure, f0=f0)

    scen = Scenario(
        path=str(path),
        raw=raw,
        n_paths=n_paths_val,
        master_seed=seed_val,
        n_steps=n_steps,
        t_star=t_star,
        out_dir=out_val,
        emit_paths=emit_paths,
        model=model,
        maturities=maturities,
    )

    if "isometry" in raw:
        iso = _get(raw, "isometry", "", dict)
        tables = _get(iso, "integrands", "isometry", list)
        scen.isometry_integrands = [
            _build_integrand(tbl, f"isometry.integrands[{i}]") for i, tbl in enumerate(tables)
        ]

    if "hedge" in raw:
        hedge = _get(raw, "hedge", "", dict)
        claim_tbl = _get(hedge, "claim", "hedge", dict)
        kind = _get(claim_tbl, "kind", "hedge.claim", str)
        if kind not in CLAIM_KINDS:
            raise ScenarioError("hedge.claim.kind", f"unknown claim {kind!r}; choose from {sorted(CLAIM_KINDS)}")
        try:
            scen.hedge_claim = CLAIM_KINDS[kind](claim_tbl)
        except KeyError as exc:
            raise ScenarioError("hedge.claim", f"missing key {exc}")
        basis_tbl = _get(hedge, "basis", "hedge", dict)
        basis_mats = _get(basis_tbl, "maturities", "hedge.basis", list)
        n_buckets = _get(basis_tbl, "n_buckets", "hedge.basis", int, 1)
        for m in basis_mats:
            if not np.any(np.isclose(maturities, m, rtol=0.0, atol=1e-12)):
                raise ScenarioError(
                    "hedge.basis.maturities", f"maturity {m} is not in market.maturities"
                )
        if kind == "bond" and not np.any(
            np.isclose(maturities, claim_tbl["maturity"], rtol=0.0, atol=1e-12)
        ):
            raise ScenarioError("hedge.claim.maturity", "claim bond is not in market.maturities")
        try:
            scen.hedge_basis = HedgeBasis(
                maturities=tuple(float(m) for m in basis_mats), n_buckets=n_buckets
            )
        except ValidationError as exc:
            raise ScenarioError("hedge.basis", str(exc))
        scen.hedge_lam = _get(hedge, "lam", "hedge", float, 1e-8)

    if "incompleteness" in raw:
        inc = _get(raw, "incompleteness", "", dict)
        y0 = _get(inc, "y0", "incompleteness", float)
        if y0 == 0.0:
            raise ScenarioError("incompleteness.y0", "witness point must be nonzero")
        k0 = _get(inc, "k0", "incompleteness", float, 2.0)
        if k0 <= 0:
            raise ScenarioError("incompleteness.k0", "stopping bound must be positive")
        K = _get(inc, "K", "incompleteness", int, 6)
        if K < 1:
            raise ScenarioError("incompleteness.K", "need at least one annulus pair")
        n_levels = _get(inc, "n_levels", "incompleteness", int, 3)
        if n_levels < 1:
            raise ScenarioError("incompleteness.n_levels", "need at least one level")
        t_max = _get(inc, "t_max", "incompleteness", float, None)
        if t_max is not None and t_max <= t_star:
            raise ScenarioError("incompleteness.t_max", "must exceed the horizon")
        if measure is None:
            raise ScenarioError("incompleteness", "needs a jump measure under levy.measure")
        scen.incompleteness = IncompletenessConfig(
            y0=y0,
            eps1=_get(inc, "eps1", "incompleteness", float, None),
            K=K,
            k0=k0,
            n_levels=n_levels,
            t_max=t_max,
            base_maturities=_get(inc, "base_maturities", "incompleteness", int, 2),
            base_buckets=_get(inc, "base_buckets", "incompleteness", int, 2),
            n_snapshots=_get(inc, "n_snapshots", "incompleteness", int, 10),
        )

    return scen
