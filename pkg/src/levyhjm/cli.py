"""Command line front end: scenario in, CSV/JSON artifacts + manifest out."""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import parallel
from .errors import NumericalError, ValidationError
from .girsanov import density_grid_batch, density_terminal_batch
from .hedging import least_squares_hedge
from .incompleteness import incompleteness_experiment
from .jump_calculus import estimate_isometry
from .market import check_drift_martingale, check_martingale_conditions
from .paths import simulate_batch
from .reporting import RunManifest, Timer, write_csv, write_json
from .scenario import Scenario, load_scenario


def scenario_options(fn):
    options = [
        click.option("--scenario", "scenario_path", required=True,
                     type=click.Path(), help="TOML scenario file."),
        click.option("--seed", type=int, default=None, help="Override run.master_seed."),
        click.option("--paths", "n_paths", type=int, default=None, help="Override run.n_paths."),
        click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Override the output directory."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def run_command(name):
    """Load the scenario, run the body, write the manifest, map exit codes."""

    def deco(fn):
        @scenario_options
        @functools.wraps(fn)
        def wrapper(scenario_path, seed, n_paths, out_dir, **kwargs):
            try:
                scen = load_scenario(scenario_path, seed=seed, n_paths=n_paths, out_dir=out_dir)
                out = Path(scen.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                manifest = RunManifest(
                    subcommand=name,
                    scenario_hash=scen.content_hash(),
                    master_seed=scen.master_seed,
                    n_paths=scen.n_paths,
                )
                with Timer(manifest, name):
                    files = fn(scen, out, **kwargs)
                for path in files:
                    manifest.record(path)
                manifest.write(out)
                click.echo(f"{name}: wrote {', '.join(Path(p).name for p in files)} -> {out}")
            except ValidationError as exc:
                click.echo(f"error: {exc}", err=True)
                sys.exit(2)
            except NumericalError as exc:
                click.echo(f"numerical error: {exc}", err=True)
                sys.exit(3)

        return wrapper

    return deco


@click.group()
def main():
    """Simulation laboratory for jump-diffusion bond markets."""


@main.command()
@run_command("simulate")
def simulate(scen: Scenario, out: Path):
    """Simulate driver paths; emit a paths CSV and terminal-moment summary."""
    grid = scen.grid()
    triplet = scen.model.triplet()

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, scen.master_seed, first, count)
        counts = np.diff(batch.offsets)
        return {
            "z": batch.z[:, -1],
            "w": batch.w[:, -1],
            "n_jumps": counts.astype(float),
        }

    res = parallel.sweep(per_chunk, scen.n_paths)
    z, w = res["z"], res["w"]
    summary = {
        "n_paths": scen.n_paths,
        "t_star": scen.t_star,
        "terminal": {
            "z_mean": float(z.mean()),
            "z_var": float(z.var(ddof=1)) if z.size > 1 else 0.0,
            "w_mean": float(w.mean()),
            "w_var": float(w.var(ddof=1)) if w.size > 1 else 0.0,
            "jumps_mean": float(res["n_jumps"].mean()),
        },
    }
    files = [write_json(out / "simulate.json", summary)]

    n_emit = min(scen.emit_paths, scen.n_paths)
    rows = []
    if n_emit:
        batch = simulate_batch(triplet, grid, scen.master_seed, 0, n_emit)
        for i in range(n_emit):
            for k, t in enumerate(grid):
                rows.append((i, t, batch.w[i, k], batch.z[i, k]))
    files.append(write_csv(out / "paths.csv", ["path", "t", "w", "z"], rows))
    return files


@main.command()
@run_command("isometry")
def isometry(scen: Scenario, out: Path):
    """Monte Carlo isometry checks for the configured jump integrands."""
    if not scen.isometry_integrands:
        raise ValidationError("scenario has no [isometry] integrands")
    grid = scen.grid()
    triplet = scen.model.triplet()
    pair = scen.model.pair
    tilted = not (pair.phi_is_zero and pair.psi.name == "0")
    reports = []
    for g in scen.isometry_integrands:
        reports.append(("P", estimate_isometry(g, triplet, grid, scen.n_paths, scen.master_seed)))
        if tilted:
            reports.append(
                ("Q", estimate_isometry(g, triplet, grid, scen.n_paths, scen.master_seed, pair=pair))
            )
    rows = [
        (law, r.name, r.lhs, r.rhs, r.se, (r.lhs - r.rhs) / r.se if r.se else 0.0)
        for law, r in reports
    ]
    files = [
        write_csv(out / "isometry.csv", ["law", "integrand", "lhs", "rhs", "se", "z"], rows),
        write_json(out / "isometry.json", [dict(law=law, **r.as_dict()) for law, r in reports]),
    ]
    return files


@main.command()
@run_command("girsanov")
def girsanov(scen: Scenario, out: Path):
    """Density-process diagnostics: E[rho_t] = 1 along the grid."""
    grid = scen.grid()
    triplet = scen.model.triplet()
    pair = scen.model.pair
    kidx = np.unique(np.linspace(1, grid.shape[0] - 1, 9).astype(int))

    def per_chunk(first, count):
        batch = simulate_batch(triplet, grid, scen.master_seed, first, count)
        rho = density_grid_batch(pair, batch)
        return {"rho_k": rho[:, kidx], "rho_T": rho[:, -1]}

    res = parallel.sweep(per_chunk, scen.n_paths)
    rho_k = res["rho_k"]
    means = rho_k.mean(axis=0)
    ses = rho_k.std(axis=0, ddof=1) / np.sqrt(scen.n_paths)
    rows = [
        (float(grid[k]), float(means[j]), float(ses[j]), float((means[j] - 1.0) / ses[j]))
        for j, k in enumerate(kidx)
    ]
    rho_t = res["rho_T"]
    report = {
        "n_paths": scen.n_paths,
        "terminal": {
            "mean": float(rho_t.mean()),
            "se": float(rho_t.std(ddof=1) / np.sqrt(scen.n_paths)),
            "min": float(rho_t.min()),
            "max": float(rho_t.max()),
        },
        "worst_abs_z": float(np.max(np.abs((means - 1.0) / ses))),
    }
    return [
        write_csv(out / "girsanov.csv", ["t", "mean_rho", "se", "z"], rows),
        write_json(out / "girsanov.json", report),
    ]


@main.command()
@run_command("drift")
def drift(scen: Scenario, out: Path):
    """Martingale check of the discounted bond prices under the implied drift."""
    check_martingale_conditions(scen.model, scen.maturities)
    grid = scen.grid()
    kidx = np.unique(np.linspace(1, grid.shape[0] - 1, 9).astype(int))
    report = check_drift_martingale(
        scen.model, grid, scen.maturities, grid[kidx], scen.n_paths, scen.master_seed
    )
    rows = [
        (r["t"], r["maturity"], r["estimate"], r["target"], r["se"], r["z"])
        for r in report.rows()
    ]
    body = {
        "n_paths": scen.n_paths,
        "maturities": scen.maturities,
        "worst_abs_z": float(report.worst_z),
    }
    return [
        write_csv(out / "drift.csv", ["t", "maturity", "estimate", "target", "se", "z"], rows),
        write_json(out / "drift.json", body),
    ]


@main.command()
@run_command("hedge")
def hedge(scen: Scenario, out: Path):
    """Least-squares hedge of the configured claim on the configured basis."""
    if scen.hedge_claim is None or scen.hedge_basis is None:
        raise ValidationError("scenario has no [hedge] section")
    check_martingale_conditions(scen.model, scen.maturities)
    report = least_squares_hedge(
        scen.hedge_claim,
        scen.model,
        scen.grid(),
        scen.hedge_basis,
        scen.n_paths,
        scen.master_seed,
        lam=scen.hedge_lam,
    )
    rows = [
        (m, b, float(report.coeffs[k, b]))
        for k, m in enumerate(scen.hedge_basis.maturities)
        for b in range(scen.hedge_basis.n_buckets)
    ]
    return [
        write_csv(out / "hedge_coeffs.csv", ["maturity", "bucket", "coeff"], rows),
        write_json(out / "hedge.json", report.as_dict()),
    ]


@main.command()
@run_command("incompleteness")
def incompleteness(scen: Scenario, out: Path):
    """Full incompleteness experiment: certificates plus residual floors."""
    cfg = scen.incompleteness
    if cfg is None:
        raise ValidationError("scenario has no [incompleteness] section")
    check_martingale_conditions(scen.model, scen.maturities)
    rep = incompleteness_experiment(
        scen.model,
        scen.grid(),
        y0=cfg.y0,
        k0=cfg.k0,
        n_paths=scen.n_paths,
        master_seed=scen.master_seed,
        eps1=cfg.eps1,
        K=cfg.K,
        t_max=cfg.t_max,
        base_maturities=cfg.base_maturities,
        base_buckets=cfg.base_buckets,
        n_levels=cfg.n_levels,
        n_snapshots=cfg.n_snapshots,
    )
    cert = rep.worst_certificate()
    ratio_rows = [
        (r["pair"], r["probe_a"], r["probe_b"], r["lhs"], r["rhs"], r["ratio"], r["mvt_bound"])
        for r in cert.rows()
    ]
    resid_rows = [
        (lev + 1, len(meta["maturities"]), meta["n_buckets"],
         meta["counterexample_residual"], meta["control_residual"])
        for lev, meta in enumerate(rep.levels)
    ]
    return [
        write_csv(
            out / "ratio_table.csv",
            ["pair", "probe_a", "probe_b", "lhs", "rhs", "ratio", "mvt_bound"],
            ratio_rows,
        ),
        write_csv(
            out / "residuals.csv",
            ["level", "n_maturities", "n_buckets", "counterexample", "control"],
            resid_rows,
        ),
        write_json(out / "incompleteness.json", rep.as_dict()),
    ]


if __name__ == "__main__":
    main()
