"""Gaussian sample paths on uniform time grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ScatterModel, ServiceModel
from .streams import as_generator


@dataclass(frozen=True)
class Grid:
    t0: float
    t1: float
    m: int

    def __post_init__(self):
        if self.m < 1 or not self.t1 > self.t0:
            raise ValueError("grid needs m >= 1 cells and t1 > t0")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.m

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.m + 1)


@dataclass(frozen=True)
class GridPath:
    """Values of a path at the m+1 points of a uniform grid."""

    t0: float
    t1: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a grid path needs at least two values")
        object.__setattr__(self, "values", values)
        if not self.t1 > self.t0:
            raise ValueError("grid spacing must be positive")

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> Grid:
        return Grid(self.t0, self.t1, self.m)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t):
        """Linear interpolation between grid points."""
        return np.interp(t, self.times, self.values)


def bridge_at(u: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Brownian bridge at the non-decreasing clock values ``u`` in [0, 1].

    Built as B(u) - u B(1) from exact Gaussian increments, one normal per gap
    of ``[0, u_0, ..., u_m, 1]``; returns shape ``(n_paths, len(u))``.
    """
    u = np.asarray(u, dtype=float)
    knots = np.concatenate(([0.0], u, [1.0]))
    gaps = np.diff(knots)
    if np.any(gaps < 0):
        raise ValueError("bridge clock must be non-decreasing in [0, 1]")
    z = rng.standard_normal((n_paths, gaps.size))
    walk = np.cumsum(z * np.sqrt(gaps), axis=1)
    b1 = walk[:, -1:]
    return walk[:, :-1] - u * b1


def _motion_at(u: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    gaps = np.diff(np.concatenate(([0.0], u)))
    z = rng.standard_normal((n_paths, gaps.size))
    return np.cumsum(z * np.sqrt(gaps), axis=1)


def brownian_bridge_paths(grid: Grid, n_paths: int, stream) -> np.ndarray:
    """Bridge paths pinned at 0 at both grid ends, shape ``(n_paths, m+1)``."""
    rng = as_generator(stream)
    clock = (grid.times - grid.t0) / (grid.t1 - grid.t0)
    clock[-1] = 1.0
    paths = np.sqrt(grid.t1 - grid.t0) * bridge_at(clock, n_paths, rng)
    paths[:, 0] = 0.0
    paths[:, -1] = 0.0
    return paths


def brownian_bridge_path(grid: Grid, stream) -> GridPath:
    return GridPath(grid.t0, grid.t1, brownian_bridge_paths(grid, 1, stream)[0])


def z_process_paths(
    service: ServiceModel,
    scatter: ScatterModel,
    grid: Grid,
    n_paths: int,
    stream,
) -> np.ndarray:
    """sigma_V B1(F(t)) + EV1 B2bridge(F(t)) on the grid, B1 independent of the bridge.

    The bridge is drawn first; with zero service variance no second Gaussian
    source is consumed, so the result is EV1 times a plain bridge path.
    """
    rng = as_generator(stream)
    clock = np.asarray(scatter.cdf(grid.times), dtype=float)
    paths = service.mean * bridge_at(clock, n_paths, rng)
    if service.variance > 0.0:
        paths = paths + service.std * _motion_at(clock, n_paths, rng)
    return paths


def z_process_path(service, scatter, grid: Grid, stream) -> GridPath:
    return GridPath(grid.t0, grid.t1, z_process_paths(service, scatter, grid, 1, stream)[0])


def segment_minima(values: np.ndarray, seg_var, rng: np.random.Generator) -> np.ndarray:
    """Exact minima of Brownian bridges joining consecutive grid values.

    ``values`` has shape ``(..., m+1)``; ``seg_var`` is the variance accrued on
    each of the m segments (scalar or length-m).  Uses the closed-form law of
    a bridge minimum given its endpoints, so the continuous-path running
    minimum carries no grid bias.
    """
    a = values[..., :-1]
    b = values[..., 1:]
    u = rng.random(a.shape)
    h = np.broadcast_to(np.asarray(seg_var, dtype=float), a.shape)
    disc = (b - a) ** 2 - 2.0 * h * np.log1p(-u)
    return 0.5 * (a + b - np.sqrt(disc))


def segment_maxima(values: np.ndarray, seg_var, rng: np.random.Generator) -> np.ndarray:
    return -segment_minima(-values, seg_var, rng)
