"""Grid kernels against brute-force references, on both backends."""

import os
import subprocess
import sys

import numpy as np
import pytest

from levyhjm import kernels

RNG = np.random.default_rng(42)


def ragged_case(n_paths=60, n_grid=33, max_jumps=9, dim=3):
    grid = np.linspace(0.0, 1.0, n_grid)
    counts = RNG.integers(0, max_jumps, size=n_paths)
    offsets = np.zeros(n_paths + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(counts)
    total = int(offsets[-1])
    jump_times = np.concatenate(
        [np.sort(RNG.uniform(1e-9, 1.0, size=c)) for c in counts]
    ) if total else np.empty(0)
    values = RNG.normal(size=total)
    vals2d = RNG.normal(size=(total, dim))
    return grid, jump_times, values, vals2d, offsets


BACKENDS = [
    pytest.param("numpy", id="numpy"),
    pytest.param(
        "numba",
        id="numba",
        marks=pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba missing"),
    ),
]


def pick(name, backend):
    return getattr(kernels, f"_{name}_{backend}")


@pytest.mark.parametrize("backend", BACKENDS)
def test_cumulative_jump_sums(backend):
    grid, jt, vals, _, offsets = ragged_case()
    fn = pick("cumulative_jump_sums", backend)
    got = fn(grid, jt, vals, offsets)
    for p in range(offsets.shape[0] - 1):
        sl = slice(offsets[p], offsets[p + 1])
        want = np.array([vals[sl][jt[sl] <= t].sum() for t in grid])
        assert np.allclose(got[p], want, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_segment_sums(backend):
    _, _, vals, _, offsets = ragged_case()
    fn = pick("segment_sums", backend)
    got = fn(vals, offsets)
    want = np.array([vals[offsets[p]: offsets[p + 1]].sum() for p in range(offsets.shape[0] - 1)])
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_segment_sums_empty_segments(backend):
    vals = np.array([1.0, 2.0, 3.0])
    offsets = np.array([0, 0, 2, 2, 3], dtype=np.int64)
    fn = pick("segment_sums", backend)
    assert np.array_equal(fn(vals, offsets), np.array([0.0, 3.0, 0.0, 3.0]))


@pytest.mark.parametrize("backend", BACKENDS)
def test_accumulate_jump_matrix(backend):
    grid, jt, _, vals2d, offsets = ragged_case()
    fn = pick("accumulate_jump_matrix", backend)
    got = fn(grid, jt, offsets, vals2d)
    n_paths = offsets.shape[0] - 1
    want = np.zeros((n_paths, grid.shape[0], vals2d.shape[1]))
    for p in range(n_paths):
        for j in range(offsets[p], offsets[p + 1]):
            want[p, grid >= jt[j], :] += vals2d[j]
    assert np.allclose(got, want, atol=1e-12)


def reference_stopped(grid, jt, jv, comp_grid, k0):
    """Scan the compensated jump sum and stop at the first |value| >= k0.

    The compensator is linear between grid points, so between jumps the
    running value is monotone per step and only step ends and jump instants
    can be first crossings.
    """
    acc = 0.0
    j = 0
    for i in range(1, grid.shape[0]):
        while j < jt.shape[0] and jt[j] <= grid[i]:
            acc += jv[j]
            comp = np.interp(jt[j], grid, comp_grid)
            if abs(acc - comp) >= k0:
                return acc - comp, jt[j], True
            j += 1
        if abs(acc - comp_grid[i]) >= k0:
            return acc - comp_grid[i], grid[i], True
    return acc - comp_grid[-1], grid[-1], False


@pytest.mark.parametrize("backend", BACKENDS)
def test_stopped_compensated_scan(backend):
    grid, jt, vals, _, offsets = ragged_case(n_paths=200)
    comp_grid = 0.8 * grid
    k0 = 0.9
    fn = pick("stopped_scan", backend)
    xs, taus, stopped = fn(grid, jt, vals, offsets, comp_grid, k0)
    for p in range(offsets.shape[0] - 1):
        sl = slice(offsets[p], offsets[p + 1])
        x, tau, flag = reference_stopped(grid, jt[sl], vals[sl], comp_grid, k0)
        assert np.isclose(xs[p], x, atol=1e-12)
        assert np.isclose(taus[p], tau, atol=1e-12)
        assert stopped[p] == flag
        if flag:
            assert abs(xs[p]) >= k0


@pytest.mark.parametrize("backend", BACKENDS)
def test_segmented_prior_cumsum(backend):
    n, dim = 50, 4
    keys = np.sort(RNG.integers(0, 12, size=n)).astype(np.int64)
    vals2d = RNG.normal(size=(n, dim))
    fn = pick("segmented_prior_cumsum", backend)
    got = fn(keys, vals2d)
    want = np.zeros_like(vals2d)
    for i in range(n):
        mask = (keys[:i] == keys[i])
        want[i] = vals2d[:i][mask].sum(axis=0)
    assert np.allclose(got, want, atol=1e-12)


def test_backends_agree_on_shared_data():
    if not kernels.NUMBA_AVAILABLE:
        pytest.skip("numba missing")
    grid, jt, vals, vals2d, offsets = ragged_case(n_paths=300)
    comp = 0.5 * grid
    pairs = [
        ("cumulative_jump_sums", (grid, jt, vals, offsets)),
        ("accumulate_jump_matrix", (grid, jt, offsets, vals2d)),
        ("stopped_scan", (grid, jt, vals, offsets, comp, 0.7)),
    ]
    for name, args in pairs:
        a = pick(name, "numba")(*args)
        b = pick(name, "numpy")(*args)
        if isinstance(a, tuple):
            for x, y in zip(a, b):
                assert np.array_equal(x, y), name
        else:
            assert np.array_equal(a, b), name
    # reductions may differ in the last ulp (summation order)
    a = pick("segment_sums", "numba")(vals, offsets)
    b = pick("segment_sums", "numpy")(vals, offsets)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_backend_env_flag_selects_numpy():
    code = (
        "import levyhjm.kernels as k; print(k.active_backend())"
    )
    env = dict(os.environ, LEVY_HJM_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


def test_backend_env_flag_rejects_unknown():
    env = dict(os.environ, LEVY_HJM_BACKEND="cuda")
    code = "import levyhjm.kernels as k; k.active_backend()"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.returncode != 0
