"""Path simulation: reproducibility, jump law, Lévy–Itô bookkeeping."""

import numpy as np

from levyhjm.measures import NullMeasure
from levyhjm.paths import LevyTriplet, jump_counting, make_grid, simulate_batch, simulate_path
from levyhjm.rng import RngStream
from levyhjm.sets import RealSet

from conftest import SEED, assert_within_se


def test_same_stream_same_path(cp_triplet, grid):
    p1 = simulate_path(cp_triplet, grid, RngStream(SEED, 3))
    p2 = simulate_path(cp_triplet, grid, RngStream(SEED, 3))
    assert np.array_equal(p1.z, p2.z)
    assert np.array_equal(p1.jump_times, p2.jump_times)


def test_different_stream_different_path(cp_triplet, grid):
    p1 = simulate_path(cp_triplet, grid, RngStream(SEED, 0))
    p2 = simulate_path(cp_triplet, grid, RngStream(SEED, 1))
    assert not np.array_equal(p1.z, p2.z)


def test_batch_rows_match_single_paths(jump_diffusion_triplet, grid):
    batch = simulate_batch(jump_diffusion_triplet, grid, SEED, 5, 4)
    for i in range(4):
        single = simulate_path(jump_diffusion_triplet, grid, RngStream(SEED, 5 + i))
        row = batch.path(i)
        assert np.array_equal(row.w, single.w)
        assert np.array_equal(row.jump_times, single.jump_times)
        assert np.array_equal(row.jump_sizes, single.jump_sizes)
        assert np.array_equal(row.z, single.z)


def test_jump_times_sorted_within_horizon(jump_diffusion_triplet, grid):
    batch = simulate_batch(jump_diffusion_triplet, grid, SEED, 0, 64)
    for i in range(batch.n_paths):
        t = batch.path(i).jump_times
        assert np.all(np.diff(t) >= 0)
        if t.size:
            assert t[0] > 0 and t[-1] <= grid[-1]


def test_jump_count_poisson_law(cp_triplet, grid):
    """N(1, {1}) ~ Poisson(2) for the single-atom measure."""
    n = 20_000
    batch = simulate_batch(cp_triplet, grid, SEED, 0, n)
    counts = np.diff(batch.offsets).astype(float)
    se_mean = counts.std(ddof=1) / np.sqrt(n)
    assert_within_se(counts.mean(), 2.0, se_mean, label="jump count mean")


def test_jump_counting_region_filter(cp_triplet, grid):
    path = simulate_path(cp_triplet, grid, RngStream(SEED, 9))
    total = jump_counting(path, 1.0)
    at_atom = jump_counting(path, 1.0, RealSet.atom(1.0))
    elsewhere = jump_counting(path, 1.0, RealSet.atom(-1.0))
    assert total == at_atom
    assert elsewhere == 0


def test_z_decomposition_bookkeeping(jump_diffusion_triplet, grid):
    """z = a t + w + (sum of jumps so far) - c1 t, exactly as simulated."""
    batch = simulate_batch(jump_diffusion_triplet, grid, SEED, 0, 8)
    c1 = jump_diffusion_triplet.measure.small_jump_mean()
    for i in range(batch.n_paths):
        p = batch.path(i)
        cum = np.array([p.jump_sizes[p.jump_times <= t].sum() for t in grid])
        want = jump_diffusion_triplet.a * grid + p.w + cum - c1 * grid
        assert np.allclose(p.z, want, atol=1e-12, rtol=0.0)


def test_coarsen_subsamples_grid_and_keeps_jumps(jump_diffusion_triplet):
    fine = make_grid(1.0, 256)
    batch = simulate_batch(jump_diffusion_triplet, fine, SEED, 0, 6)
    sub = batch.coarsen(4)
    assert np.array_equal(sub.grid, fine[::4])
    assert np.array_equal(sub.w, batch.w[:, ::4])
    assert np.array_equal(sub.jump_times, batch.jump_times)
    assert np.array_equal(sub.z, batch.z[:, ::4])


def test_brownian_terminal_variance(grid):
    triplet = LevyTriplet(a=0.0, q=0.25, measure=NullMeasure())
    n = 40_000
    batch = simulate_batch(triplet, grid, SEED, 0, n)
    w1 = batch.w[:, -1]
    assert batch.jump_times.size == 0
    se_var = w1.var(ddof=1) * np.sqrt(2.0 / (n - 1))
    assert_within_se(w1.var(ddof=1), 0.25, se_var, label="terminal variance")
