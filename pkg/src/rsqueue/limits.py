"""Fluid and diffusion limits of the workload process."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .core import Grid, GridPath, as_generator, ks_statistic, segment_minima, tabulated_cdf
from .core.models import ScatterModel, ServiceModel
from .core.paths import bridge_at, _motion_at
from .queue import workload_samples
from .transient import ReflectedLawParams, reflected_diffusion_cdf_quadrature

def golden_section_min(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8) -> tuple[float, float]:
    """Minimise a unimodal f on [lo, hi]; returns (argmin, min).

    Bounded Brent search (golden-section steps with parabolic interpolation).
    """
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol, "maxiter": 2000})
    return float(res.x), float(res.fun)


def golden_section_max(f, lo, hi, tol=1e-8):
    x, v = golden_section_min(lambda s: -f(s), lo, hi, tol)
    return x, -v


def reflection_map(x: GridPath) -> GridPath:
    """Psi(x)(t) = x(t) - min_{t0 <= s <= t} x(s), in one pass."""
    values = x.values - np.minimum.accumulate(x.values)
    return GridPath(x.t0, x.t1, values)


def reflect(values: np.ndarray) -> np.ndarray:
    """Row-wise reflection of an array of paths."""
    return values - np.minimum.accumulate(values, axis=-1)


def fluid_workload(t: float, service: ServiceModel, scatter: ScatterModel, rho: float,
                   points: int = 10_000) -> float:
    """sup_{0 <= s <= t} (EV1 (F(t) - F(s)) - rho (t - s)).

    Grid search followed by golden-section refinement around the best cell;
    the s = t candidate makes the result non-negative.
    """
    if t <= 0:
        return 0.0
    ev = service.mean
    ft = float(scatter.cdf(t))

    def gain(s):
        return ev * (ft - float(scatter.cdf(s))) - rho * (t - s)

    s_grid = np.linspace(0.0, t, points + 1)
    values = ev * (ft - scatter.cdf(s_grid)) - rho * (t - s_grid)
    k = int(np.argmax(values))
    best = float(values[k])
    lo, hi = s_grid[max(k - 1, 0)], s_grid[min(k + 1, points)]
    if hi > lo:
        _, refined = golden_section_max(gain, lo, hi, tol=1e-8)
        best = max(best, refined)
    return max(best, 0.0)


def fluid_workload_curve(times, service, scatter, rho, points: int = 10_000) -> np.ndarray:
    return np.array([fluid_workload(float(t), service, scatter, rho, points) for t in times])


@dataclass(frozen=True)
class Regime:
    """Near-balanced regime: c = n EV1 b + a sqrt(n), F(t) = b t + q(t)/sqrt(n).

    ``b`` is the finite mass F(infinity) of the scattering law (1 for a proper
    law).  The diffusion netput is Z + EV1 q - a e with Z built on F = b e.
    """

    service: ServiceModel
    a: float = 0.0
    q: Callable | None = field(default=None, compare=False)
    b: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.b <= 1.0:
            raise ValueError("finite mass b must lie in (0, 1]")
        if self.q is not None and abs(float(self.q(0.0))) > 1e-12:
            raise ValueError("perturbation must satisfy q(0) = 0")

    def drift(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        q = np.asarray(self.q(times), dtype=float) if self.q is not None else 0.0
        return self.service.mean * q - self.a * times


def _regime_netput(regime: Regime, grid: Grid, n_paths: int, rng) -> np.ndarray:
    clock = regime.b * (grid.times - grid.t0)
    clock = np.clip(clock, 0.0, 1.0)
    z = regime.service.mean * bridge_at(clock, n_paths, rng)
    if regime.service.variance > 0:
        z = z + regime.service.std * _motion_at(clock, n_paths, rng)
    return z + regime.drift(grid.times - grid.t0)


def diffusion_netput_paths(regime: Regime, grid: Grid, n_paths: int, stream) -> np.ndarray:
    return _regime_netput(regime, grid, n_paths, as_generator(stream))


def diffusion_workload_paths(regime: Regime, grid: Grid, n_paths: int, stream) -> np.ndarray:
    """Psi(Z + EV1 q - a e) sampled on the grid (grid-point reflection)."""
    return reflect(diffusion_netput_paths(regime, grid, n_paths, stream))


def diffusion_workload_path(regime: Regime, grid: Grid, stream) -> GridPath:
    return GridPath(grid.t0, grid.t1, diffusion_workload_paths(regime, grid, 1, stream)[0])


def diffusion_workload_at(regime: Regime, t: float, n_paths: int, stream, cells: int = 256,
                          batch: int = 20_000) -> np.ndarray:
    """Draws of the diffusion-limit workload at time t without grid bias.

    Between grid points the netput is a Brownian bridge with variance rate
    EV1^2 b (a linear q keeps this exact), so the continuous running minimum
    is sampled from the closed-form law of a bridge minimum.
    """
    rng = as_generator(stream)
    grid = Grid(0.0, t, cells)
    seg_var = regime.service.second_moment * regime.b * grid.dt
    out = np.empty(n_paths)
    for start in range(0, n_paths, batch):
        rows = min(batch, n_paths - start)
        y = _regime_netput(regime, grid, rows, rng)
        lows = segment_minima(y, seg_var, rng).min(axis=1)
        out[start:start + rows] = y[:, -1] - np.minimum(lows, 0.0)
    return np.maximum(out, 0.0)


def diffusion_limit_cdf(regime: Regime, t: float, levels):
    """Quadrature law of the uniform-scattering limit (linear drift a, q = 0, b = 1)."""
    if regime.q is not None or regime.b != 1.0:
        raise ValueError("closed transient law needs q = 0 and a proper uniform scatter")
    params = ReflectedLawParams.from_service(regime.service, t, np.asarray(levels, dtype=float), regime.a)
    return reflected_diffusion_cdf_quadrature(params)


def fclt_gap(n: int, service: ServiceModel, scatter: ScatterModel, regime: Regime, reps: int,
             t_query: float, seed: int = 0, workers: int = 1, levels: int = 801,
             return_samples: bool = False):
    """KS distance between W_n(t)/sqrt(n) and the diffusion limit at t_query.

    The pre-limit queue runs at c = n EV1 b + a sqrt(n); the reference law is
    the transient-law quadrature tabulated on a fine level grid.
    """
    if reps < 1000:
        raise ValueError("fclt_gap needs reps >= 1000")
    c = n * service.mean * regime.b + regime.a * math.sqrt(n)
    w = workload_samples(service, scatter, n, c, t_query, reps, seed, workers) / math.sqrt(n)
    top = max(float(w.max()), 1e-9) * 1.05
    grid = np.linspace(0.0, top, levels)
    cdf = tabulated_cdf(grid, diffusion_limit_cdf(regime, t_query, grid))
    ks = ks_statistic(w, cdf)
    return (ks, w) if return_samples else ks


def bridge_workload_samples(t_query, drifts, n_paths: int, stream, cells: int = 4096,
                            batch: int = 2048) -> dict:
    """Draws of Psi(B0 - d e)(t) keyed by (t, d), all sharing the same bridge paths.

    ``cells`` is the resolution over [0, 1]; each query time must sit on that
    grid.  Segment minima are exact, so the grid adds no bias.
    """
    rng = as_generator(stream)
    t_query = [float(t) for t in np.atleast_1d(t_query)]
    cols = [int(round(cells * t)) for t in t_query]
    if any(abs(c - cells * t) > 1e-9 for c, t in zip(cols, t_query)):
        raise ValueError("query times must lie on the 1/cells grid")
    m = max(cols)
    times = np.arange(m + 1) / cells
    seg_var = 1.0 / cells
    out = {(t, float(d)): np.empty(n_paths) for t in t_query for d in drifts}
    for start in range(0, n_paths, batch):
        rows = min(batch, n_paths - start)
        b = bridge_at(times, rows, rng)
        spread = -2.0 * seg_var * np.log1p(-rng.random((rows, m)))
        for d in drifts:
            y = b - float(d) * times
            lo, hi = y[:, :-1], y[:, 1:]
            gap = hi - lo
            gap *= gap
            gap += spread
            np.sqrt(gap, out=gap)
            lows = lo + hi
            lows -= gap
            run_min = np.minimum.accumulate(lows, axis=1)
            for t, col in zip(t_query, cols):
                w = y[:, col] - np.minimum(0.5 * run_min[:, col - 1], 0.0)
                out[(t, float(d))][start:start + rows] = w
    return out


def fslln_gap(n: int, service: ServiceModel, scatter: ScatterModel, rho: float, t_end: float,
              stream, points: int = 1001) -> float:
    """sup over a grid on [0, t_end] of |W_n(t)/n - fluid(t)| for one path with c = n rho."""
    from .queue import simulate_workload

    grid = Grid(0.0, t_end, points - 1)
    path = simulate_workload(service, scatter, n, n * rho, grid, stream).path.values / n
    fluid = fluid_workload_curve(grid.times, service, scatter, rho, points=2000)
    return float(np.max(np.abs(path - fluid)))
