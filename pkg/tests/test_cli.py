"""Command-line harness: outputs, exit codes, byte determinism."""

import csv
import hashlib
import json
import os
import subprocess
import sys
import textwrap
from pathlib import Path

import pytest
from click.testing import CliRunner

from levyhjm.cli import main

REPO = Path(__file__).resolve().parents[1]
DEFAULT = str(REPO / "scenarios" / "default.toml")
ATOMIC = str(REPO / "scenarios" / "atomic.toml")
BROWNIAN = str(REPO / "scenarios" / "brownian.toml")


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_simulate_writes_outputs(tmp_path):
    out = str(tmp_path / "sim")
    res = run_cli(["simulate", "--scenario", DEFAULT, "--paths", "50", "--out", out])
    assert res.exit_code == 0, res.output
    files = sorted(os.listdir(out))
    assert files == ["manifest.json", "paths.csv", "simulate.json"]
    report = json.loads((tmp_path / "sim" / "simulate.json").read_text())
    assert report["n_paths"] == 50
    assert "z_mean" in report["terminal"]


def test_simulate_brownian_scenario(tmp_path):
    """Jump-free market: the same pipeline runs with a null jump measure."""
    out = str(tmp_path / "bm")
    res = run_cli(["simulate", "--scenario", BROWNIAN, "--paths", "40", "--out", out])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "bm" / "simulate.json").read_text())
    assert report["terminal"]["jumps_mean"] == 0.0


def test_manifest_hashes_outputs(tmp_path):
    out = tmp_path / "m"
    res = run_cli(["simulate", "--scenario", DEFAULT, "--paths", "20", "--out", str(out)])
    assert res.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert set(manifest["timings"]) == {"simulate"}


def test_isometry_atomic_exact_rhs(tmp_path):
    out = tmp_path / "iso"
    res = run_cli(["isometry", "--scenario", ATOMIC, "--paths", "400", "--out", str(out)])
    assert res.exit_code == 0, res.output
    with open(out / "isometry.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    p_rows = [r for r in rows if r["law"] == "P"]
    assert any(float(r["rhs"]) == 18.0 for r in p_rows)
    assert all(abs(float(r["z"])) <= 4.0 for r in rows)


def test_hedge_outputs_coefficients(tmp_path):
    out = tmp_path / "h"
    res = run_cli(["hedge", "--scenario", DEFAULT, "--paths", "300", "--out", str(out)])
    assert res.exit_code == 0, res.output
    with open(out / "hedge_coeffs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 4  # three maturities, four buckets
    report = json.loads((out / "hedge.json").read_text())
    assert report["claim"] == "bond(1.25)"


def test_girsanov_and_drift_run(tmp_path):
    for sub in ("girsanov", "drift"):
        out = tmp_path / sub
        res = run_cli([sub, "--scenario", DEFAULT, "--paths", "300", "--out", str(out)])
        assert res.exit_code == 0, res.output
        report = json.loads((out / f"{sub}.json").read_text())
        assert report["worst_abs_z"] <= 4.0


def test_incompleteness_runs_small(tmp_path):
    out = tmp_path / "inc"
    res = run_cli(
        ["incompleteness", "--scenario", DEFAULT, "--paths", "1500", "--out", str(out)]
    )
    assert res.exit_code == 0, res.output
    report = json.loads((out / "incompleteness.json").read_text())
    assert report["separation"] > 10.0
    with open(out / "ratio_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7  # K=6 gives seven annulus pairs
    ratios = [float(r["ratio"]) for r in rows]
    assert ratios[-1] / ratios[0] > 1e3


def test_validation_error_exits_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[run]\nn_paths = 10\n[levy]\nq = -2.0\n[market]\nmaturities = [1.5]\n")
    res = CliRunner().invoke(main, ["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "levy.q" in res.output


def test_missing_isometry_block_exits_2(tmp_path):
    res = CliRunner().invoke(
        main, ["isometry", "--scenario", BROWNIAN, "--out", str(tmp_path / "o")]
    )
    assert res.exit_code == 2


def test_moment_divergence_exits_3(tmp_path):
    scen = tmp_path / "divergent.toml"
    scen.write_text(
        textwrap.dedent(
            """
            [run]
            n_paths = 50
            n_steps = 16

            [levy]
            a = 0.0
            q = 0.0

            [levy.measure]
            kind = "double_exponential"
            lam = 1.0
            p = 0.5
            eta_plus = 0.4
            eta_minus = 2.0

            [girsanov.psi]
            kind = "linear"
            c = 0.7

            [market]
            f0 = 0.02
            maturities = [1.25]

            [market.vol]
            kind = "constant"
            sigma0 = 0.1
            """
        )
    )
    res = CliRunner().invoke(main, ["drift", "--scenario", str(scen), "--out", str(tmp_path / "o")])
    assert res.exit_code == 3
    assert "numerical error" in res.output


def snapshot(out_dir):
    """Bytes of every output, with the (timed) manifest timings removed."""
    state = {}
    for p in sorted(Path(out_dir).iterdir()):
        if p.name == "manifest.json":
            m = json.loads(p.read_text())
            m.pop("timings", None)
            state[p.name] = json.dumps(m, sort_keys=True)
        else:
            state[p.name] = p.read_bytes()
    return state


@pytest.mark.parametrize("sub", ["simulate", "isometry", "hedge"])
def test_outputs_byte_identical_across_thread_counts(tmp_path, sub):
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, LEVY_HJM_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "levyhjm.cli", sub,
             "--scenario", DEFAULT, "--paths", "300", "--out", str(out)],
            env=env, capture_output=True, text=True, cwd=str(REPO),
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(snapshot(out))
    assert outs[0] == outs[1]


def test_csv_floats_round_trip(tmp_path):
    out = tmp_path / "rt"
    res = run_cli(["girsanov", "--scenario", DEFAULT, "--paths", "200", "--out", str(out)])
    assert res.exit_code == 0
    with open(out / "girsanov.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        x = float(r["mean_rho"])
        assert format(x, ".17g") == r["mean_rho"]
