"""Large deviations of P(W_n(t) > n x): tilt roots, rate profile, twisted law and IS."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import RunningMoments, as_generator, map_blocks, merge_all
from .core.models import ScatterModel, ServiceModel
from .errors import DomainError, PreconditionError, RootNotFoundError
from .limits import fluid_workload, golden_section_min
from .queue import workload_at_batch

BISECTION_STEPS = 200
THETA_GAP = 1e-12
S_MARGIN = 1e-6


@dataclass(frozen=True)
class LdpProblem:
    """P(W_n(t) > n x) with c = n c'; requires x above the fluid workload at t."""

    t: float
    x: float
    c_rate: float
    service: ServiceModel
    scatter: ScatterModel

    def __post_init__(self):
        if self.t <= 0:
            raise DomainError("t must be positive")
        if not self.service.theta_max > 0:
            raise DomainError("service law has no moment generating function near 0")
        threshold = self.threshold
        if not self.x > threshold:
            raise PreconditionError(
                f"x={self.x} must exceed the fluid workload {threshold:.6g} at t={self.t}",
                threshold=threshold,
            )

    @property
    def threshold(self) -> float:
        return fluid_workload(self.t, self.service, self.scatter, self.c_rate)

    def mass(self, s):
        """F(t) - F(s)."""
        return float(self.scatter.cdf(self.t)) - np.asarray(self.scatter.cdf(s), dtype=float)

    def target(self, s):
        return self.x + self.c_rate * (self.t - np.asarray(s, dtype=float))


def log_mgf_v(s, theta, problem: LdpProblem):
    """v(s, theta) = log((phi(theta) - 1)(F(t) - F(s)) + 1)."""
    m = problem.mass(s)
    return np.log1p((problem.service.mgf(theta) - 1.0) * m)


def dv_dtheta(s, theta, problem: LdpProblem):
    m = problem.mass(s)
    phi = problem.service.mgf(theta)
    return problem.service.mgf_prime(theta) * m / ((phi - 1.0) * m + 1.0)


def _slope_supremum(problem: LdpProblem) -> float:
    """sup over theta of dv/dtheta: the tilt pushes the work towards its upper bound."""
    if math.isfinite(problem.service.theta_max):
        return math.inf
    return problem.service.upper_bound


def _gap_slope(s, delta, problem: LdpProblem):
    m = problem.mass(s)
    phi, dphi = problem.service.mgf_gap(delta)
    return dphi * m / ((phi - 1.0) * m + 1.0)


@dataclass(frozen=True)
class Tilt:
    """A tilt root kept both as theta and as its distance to theta_max."""

    theta: float
    gap: float = math.inf


def tilt_root(s: float, problem: LdpProblem) -> Tilt:
    """The unique theta > 0 solving dv/dtheta(s, theta) = x + c'(t - s).

    The slope increases in theta.  With finite theta_max the bisection runs
    geometrically on delta = theta_max - theta down to 1e-12, which keeps the
    residual small even when the root crowds theta_max; otherwise the bracket
    is expanded until the target is passed or proven unreachable.
    """
    if not 0.0 <= s < problem.t:
        raise DomainError("s must lie in [0, t)")
    target = float(problem.target(s))
    if float(dv_dtheta(s, 0.0, problem)) >= target:
        return Tilt(0.0, problem.service.theta_max)
    theta_max = problem.service.theta_max
    if math.isfinite(theta_max):
        def excess(delta):
            return float(_gap_slope(s, delta, problem)) - target

        near = THETA_GAP * max(1.0, theta_max)
        if excess(near) < 0:
            sup = excess(near) + target
            raise RootNotFoundError(f"target slope {target} unreachable; supremum of dv/dtheta is {sup:.6g}",
                                    supremum=sup)
        lo, hi = near, theta_max  # excess(lo) >= 0 > excess(hi)
        for _ in range(BISECTION_STEPS):
            mid = math.sqrt(lo * hi)
            if mid in (lo, hi):
                break
            if excess(mid) >= 0:
                lo = mid
            else:
                hi = mid
        delta = lo if abs(excess(lo)) < abs(excess(hi)) else hi
        return Tilt(theta_max - delta, delta)

    def excess(theta):
        return float(dv_dtheta(s, theta, problem)) - target

    sup = _slope_supremum(problem)
    if target >= sup:
        raise RootNotFoundError(f"target slope {target} unreachable; supremum of dv/dtheta is {sup:.6g}",
                                supremum=sup)
    hi = 1.0
    while not excess(hi) >= 0:
        hi *= 2.0
        if hi > 1e4:
            raise RootNotFoundError(f"no tilt root below theta = 1e4 for target slope {target}", supremum=sup)
    lo = 0.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return Tilt(lo if abs(excess(lo)) < abs(excess(hi)) else hi)


def theta_root(s: float, problem: LdpProblem) -> float:
    return tilt_root(s, problem).theta


def _tilt_terms(s, tilt: Tilt, problem: LdpProblem):
    """(v, dv/dtheta) at the tilt, evaluated through the gap when it is finite."""
    m = problem.mass(s)
    if math.isfinite(tilt.gap) and tilt.theta > 0:
        phi, dphi = problem.service.mgf_gap(tilt.gap)
    else:
        phi, dphi = problem.service.mgf(tilt.theta), problem.service.mgf_prime(tilt.theta)
    denom = (phi - 1.0) * m + 1.0
    return float(np.log(denom)), float(dphi * m / denom)


def theta_residual(s, theta, problem: LdpProblem) -> float:
    """|dv/dtheta - x - c'(t - s)|; ``theta`` may be a float or a Tilt."""
    tilt = theta if isinstance(theta, Tilt) else Tilt(theta)
    return abs(_tilt_terms(s, tilt, problem)[1] - float(problem.target(s)))


def rate_value(s: float, problem: LdpProblem) -> float:
    """I'(s) = theta x - v(s, theta) + theta c'(t - s) at the tilt root; +inf without mass in (s, t]."""
    if problem.mass(s) <= 0:
        return math.inf
    tilt = tilt_root(s, problem)
    return float(tilt.theta * problem.target(s)) - _tilt_terms(s, tilt, problem)[0]


@dataclass(frozen=True)
class RateProfile:
    s: np.ndarray
    theta: np.ndarray
    rate: np.ndarray
    t_star: float
    rate_star: float
    residual: np.ndarray


def _s_grid(problem: LdpProblem, points: int, offset: float = 0.0) -> np.ndarray:
    hi = problem.t - S_MARGIN
    grid = np.linspace(0.0, hi, points)
    if offset:
        step = hi / (points - 1)
        grid = np.unique(np.concatenate(([0.0], np.clip(grid + offset * step, 0.0, hi), [hi])))
    return grid


def rate_minimize(problem: LdpProblem, points: int = 1000, offset: float = 0.0) -> tuple[float, float]:
    """(t*, I'(t*)) by grid scan of [0, t - 1e-6] then golden-section refinement.

    The right endpoint is excluded since I'(s) grows without bound as s -> t.
    ``offset`` shifts the scan grid by a fraction of its step.
    """
    grid = _s_grid(problem, points, offset)
    values = np.array([rate_value(s, problem) for s in grid])
    k = int(np.argmin(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best_s, best = float(grid[k]), float(values[k])
    if hi > lo:
        s, v = golden_section_min(lambda u: rate_value(u, problem), lo, hi, tol=1e-10)
        if v < best:
            best_s, best = s, v
    return best_s, best


def rate_profile(problem: LdpProblem, points: int = 1000) -> RateProfile:
    grid = _s_grid(problem, points)
    tilts = [tilt_root(s, problem) for s in grid]
    terms = np.array([_tilt_terms(s, tl, problem) for s, tl in zip(grid, tilts)])
    theta = np.array([tl.theta for tl in tilts])
    rate = theta * problem.target(grid) - terms[:, 0]
    residual = np.abs(terms[:, 1] - problem.target(grid))
    t_star, rate_star = rate_minimize(problem, points)
    return RateProfile(grid, theta, rate, t_star, rate_star, residual)


@dataclass(frozen=True)
class TwistedLaw:
    """Tilted law of (T, V) attached to the interval (t*, t].

    T has density f e^{-v*} off the interval and f phi(theta*) e^{-v*} on it;
    given T in the interval, V is tilted by e^{theta* v} / phi(theta*).
    """

    t_star: float
    theta: float
    v: float
    t: float

    @classmethod
    def from_problem(cls, problem: LdpProblem, t_star: float | None = None) -> "TwistedLaw":
        if t_star is None:
            t_star = rate_minimize(problem)[0]
        tilt = tilt_root(t_star, problem)
        return cls(float(t_star), tilt.theta, _tilt_terms(t_star, tilt, problem)[0], problem.t)

    @classmethod
    def nominal(cls, problem: LdpProblem) -> "TwistedLaw":
        return cls(0.0, 0.0, 0.0, problem.t)

    def phi(self, service: ServiceModel) -> float:
        return float(service.mgf(self.theta))

    def interval_mass(self, scatter: ScatterModel) -> float:
        """Nominal F(t) - F(t*)."""
        return float(scatter.cdf(self.t) - scatter.cdf(self.t_star))

    def density(self, s, problem: LdpProblem):
        s = np.asarray(s, dtype=float)
        inside = (s > self.t_star) & (s <= self.t)
        scale = np.where(inside, self.phi(problem.service), 1.0) * math.exp(-self.v)
        return problem.scatter.pdf(s) * scale

    def total_mass(self, problem: LdpProblem) -> float:
        """Quadrature of the tilted arrival-time density plus any mass at infinity."""
        lo, hi = problem.scatter.support
        cuts = sorted({lo, *(u for u in (self.t_star, self.t) if lo < u < hi), hi})
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            val, _ = integrate.quad(lambda u: float(self.density(u, problem)), a, b,
                                    epsabs=1e-14, epsrel=1e-13, limit=200)
            total += val
        return total + problem.scatter.deficit * math.exp(-self.v)


def rare_event_path(s, twisted: TwistedLaw, problem: LdpProblem):
    """Expected cumulative work per customer arriving in [0, s] under the twisted law."""
    s = np.asarray(s, dtype=float)
    service, scatter = problem.service, problem.scatter
    f_star = float(scatter.cdf(twisted.t_star))
    early = service.mean * scatter.cdf(np.minimum(s, twisted.t_star))
    late = float(service.mgf_prime(twisted.theta)) * np.maximum(scatter.cdf(s) - f_star, 0.0)
    out = (early + np.where(s > twisted.t_star, late, 0.0)) * math.exp(-twisted.v)
    return float(out) if out.ndim == 0 else out


def twisted_sample(twisted: TwistedLaw, problem: LdpProblem, size, stream):
    """Draws (T, V) from the twisted law; never-arriving customers get T = inf."""
    rng = as_generator(stream)
    scatter, service = problem.scatter, problem.service
    f_lo = float(scatter.cdf(twisted.t_star))
    width = twisted.interval_mass(scatter)
    p_in = twisted.phi(service) * width * math.exp(-twisted.v)
    u = rng.random(size)
    inside = u < p_in
    # inside: uniform over the F-mass of (t*, t]; outside: F-mass of the complement
    level_in = f_lo + width * (u / p_in if p_in > 0 else 0.0)
    w = (u - p_in) / (1.0 - p_in) if p_in < 1 else np.zeros_like(u)
    level_out = w * (1.0 - width)
    level_out = np.where(level_out < f_lo, level_out, level_out + width)
    level = np.where(inside, level_in, level_out)
    times = scatter.quantile(np.minimum(level, np.nextafter(1.0, 0.0)))
    times = np.where(inside, np.clip(times, np.nextafter(twisted.t_star, np.inf), twisted.t), times)
    nominal = service.sample(size, rng)
    tilted = service.tilted_sample(twisted.theta, size, rng)
    works = np.where(inside, tilted, nominal)
    return np.asarray(times, dtype=float), works


@dataclass(frozen=True)
class ISEstimate:
    p_hat: float
    std_err: float
    lr_mean: float
    lr_std_err: float
    reps: int


def _is_block(count, stream, twisted, problem, n):
    rng = stream.generator()
    c = n * problem.c_rate
    level = n * problem.x
    step = max(1, 2_000_000 // n)
    hit_stats, lr_stats = [], []
    for start in range(0, count, step):
        rows = min(step, count - start)
        times, works = twisted_sample(twisted, problem, (rows, n), rng)
        in_window = (times > twisted.t_star) & (times <= twisted.t)
        gamma = np.where(in_window, works, 0.0).sum(axis=1)
        lr = np.exp(-twisted.theta * gamma + n * twisted.v)
        order = np.argsort(times, axis=1, kind="stable")
        w = workload_at_batch(np.take_along_axis(times, order, axis=1),
                              np.take_along_axis(works, order, axis=1), c, problem.t)
        hit_stats.append(RunningMoments.of(lr * (w > level)))
        lr_stats.append(RunningMoments.of(lr))
    return merge_all(hit_stats), merge_all(lr_stats)


def is_estimate(problem: LdpProblem, n: int, reps: int, seed: int = 0, workers: int = 1,
                twisted: TwistedLaw | None = None, block: int = 10_000) -> ISEstimate:
    """Importance-sampling estimate of P(W_n(t) > n x) under the twisted law.

    Each replication draws n twisted (T, V) pairs, computes W_n(t) with
    c = n c' and weights the indicator by exp(-theta* Gamma_n(t*, t] + n v*).
    """
    if reps < 1000:
        raise ValueError("is_estimate needs reps >= 1000")
    twisted = TwistedLaw.from_problem(problem) if twisted is None else twisted
    parts = map_blocks(_is_block, reps, seed, twisted, problem, n, workers=workers, block=block)
    hits = merge_all([p[0] for p in parts])
    lrs = merge_all([p[1] for p in parts])
    return ISEstimate(hits.mean, hits.std_err, lrs.mean, lrs.std_err, reps)


def decay_rate(estimate: ISEstimate, n: int) -> float:
    """-(1/n) log p_hat."""
    return -math.log(estimate.p_hat) / n if estimate.p_hat > 0 else math.inf


# closed forms for the exponential-service, uniform-scatter example ------------------------------

def example_theta_variant(s, t, x, c_rate):
    """Alternative closed-form tilt root for exponential service and uniform scatter (comparison only).

    With a = t - s and X = x + c' a it solves X (1 - theta)(1 - a theta) = a.
    """
    a = t - s
    X = x + c_rate * a
    # X a theta^2 - X (1 + a) theta + X - a = 0, smaller root
    disc = (X * (1 + a)) ** 2 - 4 * X * a * (X - a)
    return (X * (1 + a) - math.sqrt(disc)) / (2 * X * a)


def example_theta_exact(s, t, x, c_rate):
    """Exact tilt root for exponential(1) service and uniform scatter.

    Solves X (1 - theta)(1 - theta + a theta) = a with a = t - s.
    """
    a = t - s
    X = x + c_rate * a
    # (1 - a) theta^2 - (2 - a) theta + 1 - a/X = 0, root in (0, 1)
    A, B, C = 1.0 - a, -(2.0 - a), 1.0 - a / X
    if abs(A) < 1e-15:
        return -C / B
    disc = B * B - 4 * A * C
    return (-B - math.sqrt(disc)) / (2 * A)
