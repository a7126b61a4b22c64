"""Path simulation for the driving process Z = drift + Wiener + jumps.

Finite-activity simulation: jump times are exact (never snapped to the
grid); the Wiener part lives on the time grid.  Grid values of Z follow

    z(t) = a t + W(t) + [sum of jumps with |y| <= 1, tau <= t]
           - t * int_{eps <= |y| <= 1} y nu(dy)
           + [sum of jumps with |y| > 1, tau <= t]

which is the compensated small-jump / raw large-jump split on the simulated
support.  One RNG stream per path: ``stream_index`` is the path index, so a
path is reproducible from ``(master_seed, stream_index)`` alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError
from .measures import LevyMeasure
from .rng import RngStream
from .sets import RealSet


@dataclass(frozen=True)
class LevyTriplet:
    """Characteristics (a, q, nu): drift, Wiener variance rate, jump measure."""

    a: float
    q: float
    measure: LevyMeasure

    def __post_init__(self):
        if self.q < 0:
            raise DomainError("Wiener variance rate q must be non-negative")


def make_grid(t_star: float, n_steps: int) -> np.ndarray:
    if t_star <= 0 or n_steps < 1:
        raise DomainError("need t_star > 0 and at least one step")
    return np.linspace(0.0, t_star, n_steps + 1)


@dataclass
class LevyPath:
    """One simulated path: Wiener values on the grid, exact jump times."""

    grid: np.ndarray
    w: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    z: np.ndarray
    triplet: LevyTriplet
    stream: RngStream | None = None

    @property
    def t_star(self) -> float:
        return float(self.grid[-1])

    def coarsen(self, factor: int) -> "LevyPath":
        """Same randomness on a coarser grid (jump data is grid-free)."""
        if factor < 1 or (self.grid.shape[0] - 1) % factor:
            raise DomainError("coarsening factor must divide the step count")
        return LevyPath(
            grid=self.grid[::factor],
            w=self.w[::factor],
            jump_times=self.jump_times,
            jump_sizes=self.jump_sizes,
            z=self.z[::factor],
            triplet=self.triplet,
            stream=self.stream,
        )

    def w_increments(self) -> np.ndarray:
        return np.diff(self.w)


def jump_counting(path: LevyPath, t: float, region: RealSet | None = None) -> int:
    """Number of jumps up to and including time t with size in ``region``."""
    keep = path.jump_times <= t
    if region is not None:
        keep &= region.contains(path.jump_sizes)
    return int(np.count_nonzero(keep))


def _draw_one(triplet: LevyTriplet, grid, rng, rate, sqrt_q_dt):
    n_steps = grid.shape[0] - 1
    t_star = grid[-1]
    w = np.empty(n_steps + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(n_steps) * sqrt_q_dt, out=w[1:])
    n_jumps = int(rng.poisson(rate * t_star))
    times = np.sort(t_star * (1.0 - rng.random(n_jumps)))  # uniform on (0, t_star]
    sizes = triplet.measure.sample(rng, n_jumps) if n_jumps else np.empty(0)
    return w, times, sizes


def simulate_path(triplet: LevyTriplet, grid: np.ndarray, stream: RngStream) -> LevyPath:
    """Simulate one path of Z on ``grid`` from its dedicated stream."""
    rng = stream.generator()
    rate = triplet.measure.total_rate()
    dt = np.diff(grid)
    w, times, sizes = _draw_one(triplet, grid, rng, rate, np.sqrt(triplet.q * dt))
    z = _z_values(triplet, grid, w, times, sizes)
    return LevyPath(grid, w, times, sizes, z, triplet, stream)


def _z_values(triplet, grid, w, times, sizes):
    c1 = triplet.measure.small_jump_mean()
    offsets = np.array([0, times.shape[0]], dtype=np.int64)
    cum = kernels.cumulative_jump_sums(grid, times, sizes, offsets)[0]
    return triplet.a * grid + w + cum - c1 * grid


@dataclass
class PathBatch:
    """A contiguous block of paths in flat-array form for the MC sweeps."""

    grid: np.ndarray
    w: np.ndarray  # (n_paths, n_grid)
    jump_times: np.ndarray  # flat, sorted within each path
    jump_sizes: np.ndarray
    offsets: np.ndarray  # (n_paths + 1,)
    z: np.ndarray  # (n_paths, n_grid)
    triplet: LevyTriplet
    master_seed: int
    first_index: int

    @property
    def n_paths(self) -> int:
        return self.w.shape[0]

    @property
    def path_index_per_jump(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), np.diff(self.offsets))

    def path(self, i: int) -> LevyPath:
        sl = slice(self.offsets[i], self.offsets[i + 1])
        return LevyPath(
            grid=self.grid,
            w=self.w[i],
            jump_times=self.jump_times[sl],
            jump_sizes=self.jump_sizes[sl],
            z=self.z[i],
            triplet=self.triplet,
            stream=RngStream(self.master_seed, self.first_index + i),
        )

    def coarsen(self, factor: int) -> "PathBatch":
        """Same randomness on a coarser grid (jump data is grid-free)."""
        if factor < 1 or (self.grid.shape[0] - 1) % factor:
            raise DomainError("coarsening factor must divide the step count")
        return PathBatch(
            grid=self.grid[::factor],
            w=self.w[:, ::factor],
            jump_times=self.jump_times,
            jump_sizes=self.jump_sizes,
            offsets=self.offsets,
            z=self.z[:, ::factor],
            triplet=self.triplet,
            master_seed=self.master_seed,
            first_index=self.first_index,
        )


def simulate_batch(
    triplet: LevyTriplet, grid: np.ndarray, master_seed: int, first_index: int, n_paths: int
) -> PathBatch:
    """Simulate paths ``first_index .. first_index + n_paths - 1``.

    Row i is byte-identical to ``simulate_path`` with stream index
    ``first_index + i``: the per-path draw order is shared.
    """
    rate = triplet.measure.total_rate()
    dt = np.diff(grid)
    sqrt_q_dt = np.sqrt(triplet.q * dt)
    n_grid = grid.shape[0]
    w = np.empty((n_paths, n_grid))
    all_times = []
    all_sizes = []
    offsets = np.zeros(n_paths + 1, dtype=np.int64)
    for i in range(n_paths):
        rng = RngStream(master_seed, first_index + i).generator()
        wi, times, sizes = _draw_one(triplet, grid, rng, rate, sqrt_q_dt)
        w[i] = wi
        all_times.append(times)
        all_sizes.append(sizes)
        offsets[i + 1] = offsets[i] + times.shape[0]
    jump_times = np.concatenate(all_times) if all_times else np.empty(0)
    jump_sizes = np.concatenate(all_sizes) if all_sizes else np.empty(0)
    c1 = triplet.measure.small_jump_mean()
    cum = kernels.cumulative_jump_sums(grid, jump_times, jump_sizes, offsets)
    z = triplet.a * grid[None, :] + w + cum - c1 * grid[None, :]
    return PathBatch(
        grid, w, jump_times, jump_sizes, offsets, z, triplet, master_seed, first_index
    )
