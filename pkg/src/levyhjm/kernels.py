"""Hot per-path kernels with numba and pure-numpy implementations.

The Monte Carlo sweeps spend their time mapping ragged per-path jump data
onto the time grid.  Each kernel below has a numba ``@njit`` implementation
and an equivalent pure-numpy one; ``LEVY_HJM_BACKEND`` picks between them
(``auto`` prefers numba when importable, ``numpy`` forces the fallback,
``numba`` fails loudly if numba is missing).  ``benchmarks/kernel_benchmark.py``
times the two side by side.

Jump data arrives flattened: per-path segments of ``jump_times``/``values``
delimited by ``offsets`` (length n_paths + 1), times sorted within a path.

Every kernel is deterministic for a fixed backend.  Across backends the
sequential kernels match bit-for-bit; ``segment_sums`` may differ in the
last ulp because numpy's vectorized reduction sums in a different order
than the scalar loop.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


def _requested_backend() -> str:
    raw = os.environ.get("LEVY_HJM_BACKEND", "auto").strip().lower()
    if raw not in ("auto", "numba", "numpy"):
        raise ValueError(f"LEVY_HJM_BACKEND must be auto|numba|numpy, got {raw!r}")
    return raw


def active_backend() -> str:
    """Resolve the backend in force for this process."""
    raw = _requested_backend()
    if raw == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("LEVY_HJM_BACKEND=numba but numba is not importable")
    if raw == "auto":
        return "numba" if NUMBA_AVAILABLE else "numpy"
    return raw


# ----------------------------------------------------------------------
# cumulative_jump_sums: out[p, i] = sum of values[j] over jumps with t_j <= grid[i]


def _cumulative_jump_sums_numpy(grid, jump_times, values, offsets):
    n_paths = offsets.shape[0] - 1
    out = np.zeros((n_paths, grid.shape[0]))
    if jump_times.shape[0] == 0:
        return out
    cells = np.searchsorted(grid, jump_times, side="left")  # first i with grid[i] >= t
    path_of = np.repeat(np.arange(n_paths), np.diff(offsets))
    np.add.at(out, (path_of, cells), values)
    np.cumsum(out, axis=1, out=out)
    return out


@njit(cache=True, nogil=True)
def _cumulative_jump_sums_numba(grid, jump_times, values, offsets):  # pragma: no cover
    n_paths = offsets.shape[0] - 1
    n_grid = grid.shape[0]
    out = np.zeros((n_paths, n_grid))
    for p in range(n_paths):
        for j in range(offsets[p], offsets[p + 1]):
            c = np.searchsorted(grid, jump_times[j], side="left")
            out[p, c] += values[j]
        acc = 0.0
        for i in range(n_grid):
            acc += out[p, i]
            out[p, i] = acc
    return out


def cumulative_jump_sums(grid, jump_times, values, offsets):
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    jump_times = np.ascontiguousarray(jump_times, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if active_backend() == "numba":
        return _cumulative_jump_sums_numba(grid, jump_times, values, offsets)
    return _cumulative_jump_sums_numpy(grid, jump_times, values, offsets)


# ----------------------------------------------------------------------
# segment_sums: per-path plain sums of a flat value array


def _segment_sums_numpy(values, offsets):
    n_paths = offsets.shape[0] - 1
    if values.shape[0] == 0:
        return np.zeros(n_paths)
    starts = offsets[:-1].copy()
    # reduceat misbehaves on empty segments at the tail; clamp and zero after
    starts[starts == values.shape[0]] = values.shape[0] - 1
    sums = np.add.reduceat(values, starts)
    sums[np.diff(offsets) == 0] = 0.0
    return sums.astype(np.float64)


@njit(cache=True, nogil=True)
def _segment_sums_numba(values, offsets):  # pragma: no cover
    n_paths = offsets.shape[0] - 1
    out = np.zeros(n_paths)
    for p in range(n_paths):
        acc = 0.0
        for j in range(offsets[p], offsets[p + 1]):
            acc += values[j]
        out[p] = acc
    return out


def segment_sums(values, offsets):
    values = np.ascontiguousarray(values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if active_backend() == "numba":
        return _segment_sums_numba(values, offsets)
    return _segment_sums_numpy(values, offsets)


# ----------------------------------------------------------------------
# accumulate_jump_matrix: out[p, i, m] = sum over jumps t_j <= grid[i] of vals2d[j, m]


def _accumulate_jump_matrix_numpy(grid, jump_times, offsets, vals2d):
    n_paths = offsets.shape[0] - 1
    out = np.zeros((n_paths, grid.shape[0], vals2d.shape[1]))
    if jump_times.shape[0]:
        cells = np.searchsorted(grid, jump_times, side="left")
        path_of = np.repeat(np.arange(n_paths), np.diff(offsets))
        np.add.at(out, (path_of, cells), vals2d)
        np.cumsum(out, axis=1, out=out)
    return out


@njit(cache=True, nogil=True)
def _accumulate_jump_matrix_numba(grid, jump_times, offsets, vals2d):  # pragma: no cover
    n_paths = offsets.shape[0] - 1
    n_grid = grid.shape[0]
    n_mat = vals2d.shape[1]
    out = np.zeros((n_paths, n_grid, n_mat))
    for p in range(n_paths):
        for j in range(offsets[p], offsets[p + 1]):
            c = np.searchsorted(grid, jump_times[j], side="left")
            for m in range(n_mat):
                out[p, c, m] += vals2d[j, m]
        for m in range(n_mat):
            acc = 0.0
            for i in range(n_grid):
                acc += out[p, i, m]
                out[p, i, m] = acc
    return out


def accumulate_jump_matrix(grid, jump_times, offsets, vals2d):
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    jump_times = np.ascontiguousarray(jump_times, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    vals2d = np.ascontiguousarray(vals2d, dtype=np.float64)
    if active_backend() == "numba":
        return _accumulate_jump_matrix_numba(grid, jump_times, offsets, vals2d)
    return _accumulate_jump_matrix_numpy(grid, jump_times, offsets, vals2d)


# ----------------------------------------------------------------------
# stopped_compensated_scan: first grid/jump time where |jumpsum - comp| >= k0
#
# comp_grid holds the (deterministic) compensator at grid times; between grid
# nodes it is interpolated linearly for evaluation at jump times.  Returns
# (value_at_stop, tau, stopped_flag) per path; unstopped paths report the
# terminal value and tau = grid[-1].


def _scan_one_path(grid, jt, jv, comp_grid, k0):
    acc = 0.0
    j = 0
    n_jumps = jt.shape[0]
    for i in range(1, grid.shape[0]):
        t0, t1 = grid[i - 1], grid[i]
        c0, c1 = comp_grid[i - 1], comp_grid[i]
        while j < n_jumps and jt[j] <= t1:
            acc += jv[j]
            frac = (jt[j] - t0) / (t1 - t0)
            r = acc - (c0 + frac * (c1 - c0))
            if abs(r) >= k0:
                return r, jt[j], True
            j += 1
        r = acc - c1
        if abs(r) >= k0:
            return r, t1, True
    return acc - comp_grid[-1], grid[-1], False


_scan_one_path_numba = njit(cache=True, nogil=True)(_scan_one_path)


def _stopped_scan_numpy(grid, jump_times, jump_values, offsets, comp_grid, k0):
    n_paths = offsets.shape[0] - 1
    xs = np.empty(n_paths)
    taus = np.empty(n_paths)
    stopped = np.zeros(n_paths, dtype=np.bool_)
    for p in range(n_paths):
        sl = slice(offsets[p], offsets[p + 1])
        xs[p], taus[p], stopped[p] = _scan_one_path(
            grid, jump_times[sl], jump_values[sl], comp_grid, k0
        )
    return xs, taus, stopped


@njit(cache=True, nogil=True)
def _stopped_scan_numba(grid, jump_times, jump_values, offsets, comp_grid, k0):  # pragma: no cover
    n_paths = offsets.shape[0] - 1
    xs = np.empty(n_paths)
    taus = np.empty(n_paths)
    stopped = np.zeros(n_paths, dtype=np.bool_)
    for p in range(n_paths):
        x, tau, flag = _scan_one_path_numba(
            grid,
            jump_times[offsets[p] : offsets[p + 1]],
            jump_values[offsets[p] : offsets[p + 1]],
            comp_grid,
            k0,
        )
        xs[p] = x
        taus[p] = tau
        stopped[p] = flag
    return xs, taus, stopped


def stopped_compensated_scan(grid, jump_times, jump_values, offsets, comp_grid, k0):
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    jump_times = np.ascontiguousarray(jump_times, dtype=np.float64)
    jump_values = np.ascontiguousarray(jump_values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    comp_grid = np.ascontiguousarray(comp_grid, dtype=np.float64)
    if active_backend() == "numba":
        return _stopped_scan_numba(grid, jump_times, jump_values, offsets, comp_grid, float(k0))
    return _stopped_scan_numpy(grid, jump_times, jump_values, offsets, comp_grid, float(k0))


# ----------------------------------------------------------------------
# segmented_prior_cumsum: for jumps grouped by (path, grid cell), the sum of
# earlier same-cell rows of vals2d.  Used for left limits at jump times.


def _segmented_prior_cumsum_numpy(keys, vals2d):
    out = np.zeros_like(vals2d)
    if keys.shape[0] == 0:
        return out
    cs = np.cumsum(vals2d, axis=0)
    out[1:] = cs[:-1]
    starts = np.zeros(keys.shape[0], dtype=bool)
    starts[0] = True
    starts[1:] = keys[1:] != keys[:-1]
    start_idx = np.flatnonzero(starts)
    base = np.zeros_like(vals2d)
    base[start_idx[0]] = 0.0
    if start_idx.shape[0] > 1:
        base[start_idx[1:]] = cs[start_idx[1:] - 1]
    seg_id = np.cumsum(starts) - 1
    seg_base = base[start_idx]
    out -= seg_base[seg_id]
    return out


@njit(cache=True, nogil=True)
def _segmented_prior_cumsum_numba(keys, vals2d):  # pragma: no cover
    out = np.zeros_like(vals2d)
    n = keys.shape[0]
    if n == 0:
        return out
    m = vals2d.shape[1]
    for j in range(1, n):
        if keys[j] == keys[j - 1]:
            for k in range(m):
                out[j, k] = out[j - 1, k] + vals2d[j - 1, k]
    return out


def segmented_prior_cumsum(keys, vals2d):
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    vals2d = np.ascontiguousarray(vals2d, dtype=np.float64)
    if active_backend() == "numba":
        return _segmented_prior_cumsum_numba(keys, vals2d)
    return _segmented_prior_cumsum_numpy(keys, vals2d)
