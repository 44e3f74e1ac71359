"""Exact simulation of offered work and workload in the RS/G/1 queue.

Time intervals are left-open, right-closed: a job arriving exactly at ``s``
is not in ``(s, t]``.  The service rate ``c`` is an absolute work-per-time
rate; scaling it with the population is left to the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Grid, GridPath, RandomStream, RunningMoments, as_generator, map_blocks, merge_all
from .core.models import ScatterModel, ServiceModel

_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class OfferedWork:
    arrivals: np.ndarray
    works: np.ndarray

    def __post_init__(self):
        arrivals = np.asarray(self.arrivals, dtype=float)
        works = np.asarray(self.works, dtype=float)
        if arrivals.shape != works.shape:
            raise ValueError("arrivals and works must have matching lengths")
        if arrivals.size and np.any(np.diff(arrivals) < 0):
            raise ValueError("arrivals must be sorted")
        object.__setattr__(self, "arrivals", arrivals)
        object.__setattr__(self, "works", works)

    @property
    def total(self) -> float:
        return float(self.works.sum())


@dataclass(frozen=True)
class WorkloadRealization:
    path: GridPath
    n: int
    c: float
    scaling: str = "raw"

    def scaled(self, scaling: str) -> "WorkloadRealization":
        if self.scaling != "raw":
            raise ValueError("rescale from a raw realization")
        factor = {"raw": 1.0, "fluid": 1.0 / self.n, "diffusion": 1.0 / math.sqrt(self.n)}[scaling]
        path = GridPath(self.path.t0, self.path.t1, self.path.values * factor)
        return WorkloadRealization(path, self.n, self.c, scaling)


@dataclass(frozen=True)
class PeriodicConfig:
    n: int
    scatter: ScatterModel
    num_periods: int = 1
    period: float = 1.0

    def __post_init__(self):
        if self.period <= 0 or self.num_periods < 1:
            raise ValueError("need period > 0 and num_periods >= 1")


def offered_work(arrivals, works, s: float, t: float) -> float:
    """Total work of jobs arriving in (s, t]."""
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    arrivals = np.asarray(arrivals, dtype=float)
    works = np.asarray(works, dtype=float)
    inside = (arrivals > s) & (arrivals <= t)
    return float(works[inside].sum())


def _mass(scatter: ScatterModel, s: float, t: float) -> float:
    if t <= s:
        return 0.0
    return float(scatter.cdf(t) - scatter.cdf(s))


def offered_cov(service: ServiceModel, scatter: ScatterModel, n: int, interval1, interval2) -> float:
    """Covariance of the offered work over two intervals.

    n (EV^2 P(T in I1 and I2) - (EV)^2 P(T in I1) P(T in I2)); negative
    whenever the intervals are disjoint.
    """
    s1, s2 = interval1
    t1, t2 = interval2
    overlap = _mass(scatter, max(s1, t1), min(s2, t2))
    return n * (
        service.second_moment * overlap
        - service.mean**2 * _mass(scatter, s1, s2) * _mass(scatter, t1, t2)
    )


def workload_values(arrivals, works, c: float, times, t0: float = 0.0) -> np.ndarray:
    """Workload at ``times`` for a single sorted arrival sequence.

    W(u) = X(u) - min(0, min_{t0 <= r <= u} X(r)) with X the netput
    Gamma(t0, u] - c (u - t0).  X only drops between arrivals, so its running
    minimum is attained just before an arrival (or at u itself) and the
    recursion is exact at every event.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    works = np.asarray(works, dtype=float)
    times = np.asarray(times, dtype=float)
    if arrivals.size and arrivals[0] < t0:
        raise ValueError("all arrivals must lie at or after the grid start")
    cum = np.concatenate(([0.0], np.cumsum(works)))
    before = cum[:-1] - c * (arrivals - t0)
    run_min = np.minimum.accumulate(np.concatenate(([0.0], before)))
    k = np.searchsorted(arrivals, times, side="right")
    net = cum[k] - c * (times - t0)
    return np.maximum(net - run_min[k], 0.0)


def workload_at_batch(arrivals: np.ndarray, works: np.ndarray, c: float, t: float, t0: float = 0.0) -> np.ndarray:
    """W(t) for a batch of rows of sorted arrivals (``inf`` entries never arrive)."""
    inside = arrivals <= t
    w = np.where(inside, works, 0.0)
    cum = np.cumsum(w, axis=1)
    before = np.where(inside, cum - w - c * (arrivals - t0), np.inf)
    run_min = np.minimum(before.min(axis=1), 0.0)
    net = cum[:, -1] - c * (t - t0)
    return np.maximum(net - run_min, 0.0)


def simulate_offered(service: ServiceModel, scatter: ScatterModel, n: int, stream) -> OfferedWork:
    """Arrival epochs are drawn first, then the n works."""
    rng = as_generator(stream)
    arrivals = np.sort(scatter.sample(n, rng))
    works = service.sample(n, rng)
    finite = np.isfinite(arrivals)
    return OfferedWork(arrivals[finite], works[finite])


def workload_path(offered: OfferedWork, c: float, grid: Grid, n: int | None = None) -> WorkloadRealization:
    if c <= 0:
        raise ValueError("service rate must be positive")
    values = workload_values(offered.arrivals, offered.works, c, grid.times, grid.t0)
    n = offered.arrivals.size if n is None else n
    return WorkloadRealization(GridPath(grid.t0, grid.t1, values), n, c)


def simulate_workload(service, scatter, n: int, c: float, grid: Grid, stream) -> WorkloadRealization:
    offered = simulate_offered(service, scatter, n, stream)
    return workload_path(offered, c, grid, n)


def periodic_offered(cfg: PeriodicConfig, service: ServiceModel, stream, num_periods: int | None = None) -> OfferedWork:
    """Fresh arrival epochs and works in every slot; a job counts only inside its own slot."""
    rng = as_generator(stream)
    arrivals, works = [], []
    for slot in range(num_periods or cfg.num_periods):
        lo = slot * cfg.period
        a = lo + np.sort(cfg.scatter.sample(cfg.n, rng))
        v = service.sample(cfg.n, rng)
        keep = (a >= lo) & (a <= lo + cfg.period)
        arrivals.append(a[keep])
        works.append(v[keep])
    return OfferedWork(np.concatenate(arrivals), np.concatenate(works))


def periodic_workload_path(
    cfg: PeriodicConfig, service: ServiceModel, c: float, stream, cells_per_period: int = 1000
) -> WorkloadRealization:
    offered = periodic_offered(cfg, service, stream)
    grid = Grid(0.0, cfg.num_periods * cfg.period, cells_per_period * cfg.num_periods)
    return workload_path(offered, c, grid, cfg.n)


# --- replicated workload samples ---------------------------------------------------------------

def _rows_per_chunk(width: int) -> int:
    return max(1, _CHUNK_CELLS // max(width, 1))


def _workload_block(count, stream, service, scatter, n, c, t):
    rng = stream.generator()
    out = np.empty(count)
    step = _rows_per_chunk(n)
    for start in range(0, count, step):
        rows = min(step, count - start)
        arrivals = np.sort(scatter.sample((rows, n), rng), axis=1)
        works = service.sample((rows, n), rng)
        out[start:start + rows] = workload_at_batch(arrivals, works, c, t)
    return out


def workload_samples(service, scatter, n: int, c: float, t: float, reps: int, seed: int = 0,
                     workers: int = 1, block: int = 1000) -> np.ndarray:
    """Independent draws of W_n(t) (raw work units), one row of jobs per replication."""
    parts = map_blocks(_workload_block, reps, seed, service, scatter, n, c, t,
                       workers=workers, block=block)
    return np.concatenate(parts)


def _periodic_block(count, stream, cfg, service, c, t):
    rng = stream.generator()
    slots = max(1, math.ceil(t / cfg.period))
    out = np.empty(count)
    width = slots * cfg.n
    step = _rows_per_chunk(width)
    for start in range(0, count, step):
        rows = min(step, count - start)
        arrivals = np.empty((rows, width))
        works = np.empty((rows, width))
        for slot in range(slots):
            lo = slot * cfg.period
            a = lo + np.sort(cfg.scatter.sample((rows, cfg.n), rng), axis=1)
            a = np.where((a >= lo) & (a <= lo + cfg.period), a, np.inf)
            arrivals[:, slot * cfg.n:(slot + 1) * cfg.n] = a
            works[:, slot * cfg.n:(slot + 1) * cfg.n] = service.sample((rows, cfg.n), rng)
        order = np.argsort(arrivals, axis=1, kind="stable")
        arrivals = np.take_along_axis(arrivals, order, axis=1)
        works = np.take_along_axis(works, order, axis=1)
        out[start:start + rows] = workload_at_batch(arrivals, works, c, t)
    return out


def periodic_workload_samples(cfg: PeriodicConfig, service, c: float, t: float, reps: int, seed: int = 0,
                              workers: int = 1, block: int = 1000) -> np.ndarray:
    parts = map_blocks(_periodic_block, reps, seed, cfg, service, c, t, workers=workers, block=block)
    return np.concatenate(parts)


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    std_err: float
    reps: int


def _crude_block(count, stream, service, scatter, n, c, t, level):
    w = _workload_block(count, stream, service, scatter, n, c, t)
    return RunningMoments.of((w > level).astype(float))


def crude_tail_estimate(problem, n: int, reps: int, seed: int = 0, workers: int = 1,
                        block: int = 10_000) -> TailEstimate:
    """Plain Monte Carlo of P(W_n(t) > n x) with c = n c'.

    ``problem`` needs ``service``, ``scatter``, ``t``, ``c_rate`` and ``x``.
    The binomial standard error is zero when no replication hits the event,
    which is exactly how plain sampling fails for rare events.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    parts = map_blocks(_crude_block, reps, seed, problem.service, problem.scatter, n,
                       n * problem.c_rate, problem.t, n * problem.x, workers=workers, block=block)
    stats = merge_all(parts)
    p = stats.mean
    return TailEstimate(p, math.sqrt(p * (1 - p) / reps), reps)


__all__ = [
    "OfferedWork", "WorkloadRealization", "PeriodicConfig", "TailEstimate", "RandomStream",
    "offered_work", "offered_cov", "workload_values", "workload_at_batch", "simulate_offered",
    "workload_path", "simulate_workload", "periodic_offered", "periodic_workload_path",
    "workload_samples", "periodic_workload_samples", "crude_tail_estimate",
]
