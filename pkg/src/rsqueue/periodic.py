"""Periodic scattering: fluid limit, periodic Gaussian process and its workload laws.

The period is fixed at 1; slot p covers (p - 1, p] and p_t = max(1, ceil(t)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from .core import Grid, as_generator, segment_minima
from .core.models import ScatterModel, ServiceModel
from .core.paths import _motion_at, bridge_at
from .errors import DomainError, PreconditionError
from .transient import norm_cdf

QUAD_SPAN = 40.0
QUAD_EPSABS = 1e-9


def slot_index(t):
    """p_t = max(1, ceil(t))."""
    t = np.asarray(t, dtype=float)
    out = np.maximum(1, np.ceil(t)).astype(int)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PeriodicGaussParams:
    a: float
    mean: float = 1.0
    variance: float = 0.0
    t: float = 1.0

    def __post_init__(self):
        if self.t < 1.0:
            raise DomainError("t must be >= 1")
        if self.mean <= 0 or self.variance < 0:
            raise DomainError("need EV1 > 0 and sigma_V^2 >= 0")

    @classmethod
    def from_service(cls, service: ServiceModel, a: float, t: float = 1.0) -> "PeriodicGaussParams":
        return cls(a, service.mean, service.variance, t)

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def p_t(self) -> int:
        return slot_index(self.t)

    @property
    def has_steady_state(self) -> bool:
        # sigma_V^2 < EV1^2 holds for any positive mean; kept as the stated hypothesis
        return self.variance < self.second_moment

    def at(self, t: float) -> "PeriodicGaussParams":
        return PeriodicGaussParams(self.a, self.mean, self.variance, t)


def periodic_fluid(s, t, service: ServiceModel, scatter: ScatterModel) -> float:
    """(p_t - p_s) EV1 + EV1 (F_{p_t}(t) - F_{p_s}(s)) with F_m(u) = F(u - (m - 1))."""
    if not 0 <= s < t:
        raise DomainError("need 0 <= s < t")
    ps, pt = slot_index(s), slot_index(t)
    return service.mean * ((pt - ps) + float(scatter.cdf(t - (pt - 1)) - scatter.cdf(s - (ps - 1))))


def periodic_z_paths(params: PeriodicGaussParams, grid: Grid, n_paths: int, stream,
                     scatter: ScatterModel | None = None) -> np.ndarray:
    """Samples of Z~ on a grid starting at 0 (rows are paths).

    Z~(t) = sigma_V sum_{l < p_t} xi_l + sigma_V B_{p_t}(F(u)) + EV1 B0_{p_t}(F(u)),
    u = t - (p_t - 1), with fresh (B, B0) per slot and xi_l = B_l(1).
    """
    if grid.t0 != 0.0:
        raise DomainError("periodic paths start at time 0")
    scatter = ScatterModel.uniform() if scatter is None else scatter
    rng = as_generator(stream)
    times = grid.times
    slots = slot_index(times)
    out = np.zeros((n_paths, times.size))
    level = np.zeros((n_paths, 1))
    for p in range(1, int(slots.max()) + 1):
        idx = np.nonzero(slots == p)[0]
        u = np.clip(np.asarray(scatter.cdf(times[idx] - (p - 1)), dtype=float), 0.0, 1.0)
        clock = np.append(u, 1.0)
        bridge = params.mean * bridge_at(clock, n_paths, rng)
        if params.variance > 0:
            motion = params.sigma * _motion_at(clock, n_paths, rng)
        else:
            motion = np.zeros_like(bridge)
        out[:, idx] = level + bridge[:, :-1] + motion[:, :-1]
        level = level + motion[:, -1:]
    return out


def periodic_workload_at(params: PeriodicGaussParams, t: float, n_paths: int, stream,
                         cells_per_period: int = 64, batch: int = 10_000) -> np.ndarray:
    """Draws of sup_{s <= t}(Z~(t) - Z~(s) - a (t - s)) for uniform per-slot scattering.

    Within a slot Z~ is sqrt(EV1^2) B0 plus a linear term, so between grid
    points the netput is a Brownian bridge with variance rate EV1^2 and the
    continuous running minimum is sampled exactly.
    """
    rng = as_generator(stream)
    periods = slot_index(t)
    grid = Grid(0.0, t, max(1, int(math.ceil(cells_per_period * t))))
    # keep slot ends on the grid so each segment lies inside one slot
    knots = np.union1d(grid.times, np.arange(1, periods, dtype=float))
    seg_var = params.second_moment * np.diff(knots)
    out = np.empty(n_paths)
    for start in range(0, n_paths, batch):
        rows = min(batch, n_paths - start)
        z = _z_on_knots(params, knots, rows, rng)
        y = z - params.a * knots
        lows = np.minimum(segment_minima(y, seg_var, rng).min(axis=1), 0.0)
        out[start:start + rows] = y[:, -1] - lows
    return np.maximum(out, 0.0)


def _z_on_knots(params, knots, n_paths, rng):
    slots = slot_index(knots)
    # slot-end points belong to the slot they close
    out = np.zeros((n_paths, knots.size))
    level = np.zeros((n_paths, 1))
    for p in range(1, int(slots.max()) + 1):
        idx = np.nonzero(slots == p)[0]
        u = np.clip(knots[idx] - (p - 1), 0.0, 1.0)
        b0 = math.sqrt(params.second_moment) * bridge_at(u, n_paths, rng)
        xi = rng.standard_normal((n_paths, 1))
        out[:, idx] = level + b0 + params.sigma * u * xi
        level = level + params.sigma * xi
    return out


def phi_steady(lam, a, second_moment: float = 1.0, variance: float = 0.0):
    """1 - exp(-2 lam (lam + a)/EV1^2 + 2 lam^2 sigma_V^2/(EV1^2)^2), clamped to [0, 1]."""
    lam = np.asarray(lam, dtype=float)
    expo = -2.0 * lam * (lam + a) / second_moment + 2.0 * lam**2 * variance / second_moment**2
    out = np.where(lam > 0, -np.expm1(np.minimum(expo, 0.0)), 0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def det_service_steady(x):
    """1 - exp(-2 x (1 + x)) for x >= 0."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, -np.expm1(-2.0 * x * (1.0 + x)), 0.0)
    return float(out) if out.ndim == 0 else out


def _phi_raw(lam, a, second_moment, variance):
    lam = np.asarray(lam, dtype=float)
    return -np.expm1(-2.0 * lam * (lam + a) / second_moment + 2.0 * lam**2 * variance / second_moment**2)


def periodic_transient_cdf(lam, params: PeriodicGaussParams, clamp: bool = True):
    """phi(lam, a) Phi(a) + (2 pi)^{-1/2} int_a^inf phi(lam - sigma_V (p_t - 1) x, a) e^{-x^2/2} dx.

    The integral runs over (a, a + 40) by adaptive quadrature with a break
    point where the first argument of phi changes sign.  ``clamp`` sets phi
    to 0 for negative levels; without it the unclamped expression is used.
    """
    if not params.has_steady_state:
        warnings.warn("sigma_V^2 >= EV1^2: no steady state; transient value only", RuntimeWarning, stacklevel=2)
    a, m2, var = params.a, params.second_moment, params.variance
    if params.p_t == 1:
        # the integrand does not depend on x, so the two pieces recombine exactly
        return phi_steady(lam, a, m2, var)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    shift = params.sigma * (params.p_t - 1)
    head = phi_steady(lam_arr, a, m2, var) * norm_cdf(a)
    phi = (lambda v: phi_steady(v, a, m2, var)) if clamp else (lambda v: _phi_raw(v, a, m2, var))
    out = np.empty_like(lam_arr)
    for i, lv in enumerate(lam_arr):
        if shift == 0.0:
            tail = float(phi(lv)) * (1.0 - float(norm_cdf(a)))
        else:
            def integrand(x):
                return float(phi(lv - shift * x)) * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

            kink = lv / shift
            pts = [kink] if a < kink < a + QUAD_SPAN else None
            tail, _ = integrate.quad(integrand, a, a + QUAD_SPAN, epsabs=QUAD_EPSABS, epsrel=1e-10,
                                     limit=500, points=pts)
        out[i] = head[i] + tail
    out = np.where(lam_arr < 0, 0.0, out)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.ndim(lam) == 0 else out


def periodic_steady_cdf(lam, params: PeriodicGaussParams):
    """1 - Phi(a) exp(-2 lam (lam + a)/EV1^2 + 2 lam^2 sigma_V^2/(EV1^2)^2) for lam >= 0."""
    if not params.has_steady_state:
        raise PreconditionError("steady state needs sigma_V^2 < EV1^2",
                                threshold=params.second_moment)
    lam = np.asarray(lam, dtype=float)
    a, m2, var = params.a, params.second_moment, params.variance
    expo = -2.0 * lam * (lam + a) / m2 + 2.0 * lam**2 * var / m2**2
    out = np.where(lam < 0, 0.0, 1.0 - np.exp(log_ndtr(a) + expo))
    return float(out) if out.ndim == 0 else out
