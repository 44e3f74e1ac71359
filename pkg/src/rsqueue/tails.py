"""Exact tail asymptotics of the Gaussian workload approximation.

Everything is in units normalised by EV1: the netput is Z(s) - c s with
Var Z(s) = s (c_s^2 + 1 - s) on [0, 1], and the target is
P(W(1) > x) = P(sup_{s <= 1} (Z(s) - c s) > x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .core import as_generator
from .errors import DomainError, PreconditionError
from .limits import golden_section_min

PICKANDS = {1: 1.0, 2: 1.0 / math.sqrt(math.pi)}


@dataclass(frozen=True)
class TailProblem:
    c: float
    x: float
    scv: float

    def __post_init__(self):
        if self.x <= 0 or self.c < 0 or self.scv < 0:
            raise DomainError("need x > 0, c >= 0 and c_s^2 >= 0")

    @property
    def k(self) -> float:
        return self.scv + 1.0

    @property
    def regime(self) -> str:
        return "interior" if t_star_unclipped(self) < 1.0 else "boundary"


def variance_time_curve(t, scv):
    """Standard deviation sqrt(t (c_s^2 + 1 - t)) of the normalised Z(t)."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise DomainError("t must lie in [0, 1]")
    out = np.sqrt(t * (scv + 1.0 - t))
    return float(out) if out.ndim == 0 else out


def m_curve(t, problem: TailProblem):
    """(c t + x) / sigma(t); +inf at t = 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(t > 0, (problem.c * t + problem.x) / variance_time_curve(np.maximum(t, 0.0), problem.scv),
                       np.inf)
    return float(out) if out.ndim == 0 else out


def t_star_unclipped(problem: TailProblem) -> float:
    k = problem.k
    return problem.x * k / (problem.c * k + 2.0 * problem.x)


def t_star(problem: TailProblem) -> float:
    """Minimiser of m_x on (0, 1]; clipped to 1 in the boundary regime."""
    return min(t_star_unclipped(problem), 1.0)


def t_star_numeric(problem: TailProblem, tol: float = 1e-10) -> float:
    return golden_section_min(lambda t: m_curve(t, problem), 1e-12, 1.0, tol)[0]


def _m_derivatives(t, problem: TailProblem):
    c, x, k = problem.c, problem.x, problem.k
    g = t * (k - t)
    g1 = k - 2 * t
    num = c * t + x
    m = num / math.sqrt(g)
    m1 = c / math.sqrt(g) - 0.5 * num * g1 / g**1.5
    m2 = -c * g1 / g**1.5 + num * (0.75 * g1 * g1 / g**2.5 + 1.0 / g**1.5)
    return m, m1, m2


def curvature_A(problem: TailProblem) -> float:
    """A in sigma~(t) = 1 - A (t - t*)^2 + ..., where sigma~ = m_x(t*) / m_x(t).

    Equals m''(t*) / (2 m(t*)) = (c k + 2x)^4 / (8 k^2 x^2 (c k + x)^2), k = c_s^2 + 1.
    """
    if problem.regime != "interior":
        raise PreconditionError("t* = 1 lies on the boundary; use curvature_A_one_sided")
    c, x, k = problem.c, problem.x, problem.k
    return (c * k + 2 * x) ** 4 / (8 * k * k * x * x * (c * k + x) ** 2)


def curvature_A_variant(problem: TailProblem) -> float:
    """Alternative closed form for the curvature constant (comparison only)."""
    c, x, k = problem.c, problem.x, problem.k
    return 0.25 * x * k**3 * (c * k + x) / (c * k + 2 * x) ** 2


def curvature_A_one_sided(problem: TailProblem) -> float:
    """-sigma~''(1)/2 at the boundary maximiser t* = 1."""
    m, m1, m2 = _m_derivatives(1.0, problem)
    return m2 / (2 * m) - (m1 / m) ** 2


def normalized_sd(t, problem: TailProblem):
    return m_curve(t_star(problem), problem) / m_curve(t, problem)


def curvature_numeric(problem: TailProblem, h: float = 1e-4) -> float:
    ts = t_star(problem)
    f = lambda u: normalized_sd(u, problem)  # noqa: E731
    return -(f(ts + h) - 2 * f(ts) + f(ts - h)) / h**2 / 2


def pickands_H(alpha) -> float:
    if alpha not in PICKANDS:
        raise DomainError(f"Pickands constant only available for alpha in (1, 2), got {alpha}")
    return PICKANDS[alpha]


def piterbarg_prefactor(alpha, beta, D, sigma, A) -> float:
    """Gamma(1/beta) D^(1/alpha) sigma^(1/beta) H_alpha / (sqrt(2 pi) beta A^(1/beta))."""
    if not beta > alpha > 0:
        raise PreconditionError("need beta > alpha > 0")
    if min(D, sigma, A) <= 0:
        raise PreconditionError("D, sigma and A must be positive")
    return (gamma_fn(1.0 / beta) * D ** (1.0 / alpha) * sigma ** (1.0 / beta) * pickands_H(alpha)
            / (math.sqrt(2 * math.pi) * beta * A ** (1.0 / beta)))


def piterbarg_tail(level, H, interior: bool, alpha=1, beta=2, sigma=1.0):
    """Two-sided (interior) or one-sided (boundary) Piterbarg asymptotic."""
    level = np.asarray(level, dtype=float)
    power = -(2.0 / beta - 2.0 / alpha + 1.0)
    out = (2.0 if interior else 1.0) * H * np.exp(-level**2 / (2 * sigma**2)) * (level / sigma) ** power
    return float(out) if out.ndim == 0 else out


def tail_prob_asymptotic(x_eval, problem: TailProblem):
    """Asymptotic P(W(1) > x) at the standardised level x_eval = m_x(t*).

    alpha = 1, beta = 2, sigma = 1 and D = (c_s^2 + 1)/2.
    """
    interior = problem.regime == "interior"
    A = curvature_A(problem) if interior else curvature_A_one_sided(problem)
    H = piterbarg_prefactor(1, 2, problem.k / 2.0, 1.0, A)
    return piterbarg_tail(x_eval, H, interior)


def tail_prob_asymptotic_raw(problem: TailProblem) -> float:
    """Same asymptotic with the raw exceedance level mapped through m_x(t*)."""
    return tail_prob_asymptotic(m_curve(t_star(problem), problem), problem)


def _conditional_tail(xi, problem: TailProblem):
    """P(W(1) > x | B1(1) = xi) from Doob's bridge formula."""
    sq = math.sqrt(problem.k)
    lam = problem.x / sq
    drift = (problem.c - math.sqrt(problem.scv) * np.asarray(xi)) / sq
    return np.where(lam + drift >= 0, np.exp(-2 * lam * np.maximum(lam + drift, 0.0)), 1.0)


def tail_prob_mc(problem: TailProblem, n_paths: int, stream, batch: int = 1_000_000):
    """Conditional Monte Carlo of P(W(1) > x); returns (estimate, std_err).

    Z = sqrt(c_s^2 + 1) B0 + c_s e B1(1) with the bridge independent of
    B1(1); the endpoint is sampled and the bridge supremum is integrated out
    exactly, which keeps the estimator usable at probabilities near 1e-4.
    """
    rng = as_generator(stream)
    total = 0.0
    total_sq = 0.0
    for start in range(0, n_paths, batch):
        rows = min(batch, n_paths - start)
        p = _conditional_tail(rng.standard_normal(rows), problem)
        total += p.sum()
        total_sq += (p * p).sum()
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0)
    return mean, math.sqrt(var / n_paths)


def tail_prob_exact(problem: TailProblem) -> float:
    from scipy import integrate

    val, _ = integrate.quad(lambda z: float(_conditional_tail(z, problem)) * math.exp(-z * z / 2)
                            / math.sqrt(2 * math.pi), -12, 12, epsabs=1e-15, limit=500)
    return val


def tail_prob_path_mc(problem: TailProblem, n_paths: int, stream, cells: int = 64):
    """Path-level Monte Carlo of P(W(1) > x) with exact bridge maxima between grid points."""
    from .core.paths import bridge_at, segment_maxima

    rng = as_generator(stream)
    times = np.linspace(0.0, 1.0, cells + 1)
    z = math.sqrt(problem.k) * bridge_at(times, n_paths, rng)
    z = z + math.sqrt(problem.scv) * times * rng.standard_normal((n_paths, 1))
    y = z - problem.c * times
    highs = segment_maxima(y, problem.k / cells, rng).max(axis=1)
    hit = (highs > problem.x).astype(float)
    return float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(n_paths))


def pickands_finite(alpha, T: float, n_samples: int, stream) -> tuple[float, float]:
    """Monte Carlo of (1/T) E exp(max_{t <= T} (sqrt(2) B(t) - t^alpha)) for alpha in (1, 2).

    The max M has a closed-form law in both cases; E e^M = 1 + int_0^inf e^m P(M > m) dm
    is estimated by uniform random nodes on a window that holds all but a
    negligible part of the integrand.  Returns (estimate, std_err).
    """
    rng = as_generator(stream)
    if alpha == 1:
        # max of sqrt(2) B(t) - t over [0, T]
        s = math.sqrt(2 * T)
        upper = T + 12 * s

        def weighted_tail(m):
            from scipy.special import log_ndtr

            a = np.exp(m + log_ndtr(-(m + T) / s))
            b = np.exp(log_ndtr((T - m) / s))
            return a + b
    elif alpha == 2:
        # max of sqrt(2) N t - t^2: N^2/2 at t = N/sqrt(2) <= T, else boundary value
        upper = T * T + 12.0 * T + 40.0

        def weighted_tail(m):
            from scipy.special import log_ndtr

            # P(M > m) = P(N > sqrt(2m)) if sqrt(2m) <= sqrt(2) T else P(N > (m + T^2)/(sqrt(2) T))
            r = np.sqrt(2 * m)
            thresh = np.where(r <= math.sqrt(2) * T, r, (m + T * T) / (math.sqrt(2) * T))
            return np.exp(m + log_ndtr(-thresh))
    else:
        raise DomainError("alpha must be 1 or 2")
    nodes = rng.uniform(0.0, upper, n_samples)
    vals = upper * weighted_tail(nodes)
    mean = 1.0 + vals.mean()
    return mean / T, vals.std(ddof=1) / math.sqrt(n_samples) / T
