"""Transient laws of reflected Gaussian processes.

Three evaluators of P(Psi(Z - d e)(t) <= lam) for the uniform-scattering
diffusion limit Z = sigma_V B1 + EV1 B2bridge:

* ``reflected_bridge_cdf`` handles the pure bridge (sigma_V = 0);
* ``reflected_diffusion_cdf_quadrature`` integrates the bridge law against
  the independent endpoint B1(1) and is the reference definition;
* ``reflected_diffusion_cdf_closed`` is the same integral done in closed form.

The ``*_variant`` functions are an alternative set of constants for the same
laws.  They disagree with Monte Carlo and are kept only so the discrepancy
can be measured; nothing else in the package uses them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc, log_ndtr

from .errors import DomainError

SQRT2 = math.sqrt(2.0)
QUAD_HALF_WIDTH = 10.0
QUAD_EPSABS = 1e-9
QUAD_LIMIT = 2**15


def norm_cdf(x):
    """Standard normal CDF through erfc, accurate deep into both tails."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / SQRT2)


def _scalar(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _bridge_cdf(lam, t, d):
    lam, t, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, t, d)))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sqrt(t * (1.0 - t))
        first = norm_cdf((lam + d * t) / s)
        log_second = -2.0 * lam * (lam + d) + log_ndtr((lam * (2.0 * t - 1.0) + d * t) / s)
        out = first - np.exp(log_second)
        doob = -np.expm1(-2.0 * lam * (lam + d))
    out = np.where(t >= 1.0, doob, out)
    out = np.where(lam <= 0.0, 0.0, out)
    return np.clip(out, 0.0, 1.0)


def reflected_bridge_cdf(lam, t, d=0.0):
    """P(Psi(B0 - d e)(t) <= lam) for a standard Brownian bridge B0.

    Phi((lam + d t)/r) - exp(-2 lam (lam + d)) Phi((lam (2t - 1) + d t)/r)
    with r = sqrt(t (1 - t)); at t = 1 this is Doob's 1 - exp(-2 lam (lam + d)).
    Vectorised over all three arguments.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr <= 0.0) | (t_arr > 1.0)):
        raise DomainError("t must lie in (0, 1]")
    return _scalar(_bridge_cdf(lam, t, d))


def bridge_cdf_variant(lam, t, d=0.0):
    """Reflected-bridge formula with the alternative constants (comparison only)."""
    lam, t, d = (np.asarray(v, dtype=float) for v in (lam, t, d))
    s = np.sqrt(t * (1.0 - t))
    return _scalar(norm_cdf((lam * (1 - 2 * t) + d * t) / s)
                   - np.exp(2 * lam * (lam - d)) * norm_cdf((-lam + d * t) / s))


def gauss_phi_integral(a, b, c):
    """Integral over the real line of exp(-a xi^2) Phi(b xi + c) d xi."""
    if a <= 0:
        raise DomainError("a must be positive")
    return math.sqrt(math.pi / a) * float(norm_cdf(c * math.sqrt(2 * a / (2 * a + b * b))))


def gauss_phi_integral_variant(a, b, c):
    return math.sqrt(2 * math.pi / a) * float(norm_cdf(c * math.sqrt(a / (a + b * b))))


@dataclass(frozen=True)
class ReflectedLawParams:
    """Parameters of P(Psi(Z - d e)(t) <= lam) in natural (unnormalised) units.

    ``lam`` may be an array.  ``second_moment`` is EV1^2 and must exceed
    ``sigma_v**2`` unless the service is degenerate at zero mean.
    """

    t: float
    lam: object
    d: float = 0.0
    sigma_v: float = 0.0
    second_moment: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise DomainError("t must lie in (0, 1)")
        if self.second_moment <= 0 or self.sigma_v < 0:
            raise DomainError("need EV1^2 > 0 and sigma_V >= 0")
        if self.sigma_v**2 > self.second_moment * (1 + 1e-12):
            raise DomainError("sigma_V^2 cannot exceed EV1^2")

    @classmethod
    def from_service(cls, service, t, lam, d) -> "ReflectedLawParams":
        return cls(t, lam, d, service.std, service.second_moment)

    @property
    def scale(self) -> float:
        return math.sqrt(self.second_moment)

    def normalized(self):
        s = self.scale
        return np.asarray(self.lam, dtype=float) / s, self.d / s, self.sigma_v / s


def reflected_diffusion_cdf_quadrature(params: ReflectedLawParams):
    """Integrate the bridge law against the standard normal endpoint x of B1(1).

    Conditional on x the netput is sqrt(EV1^2) B0 - (d - sigma_V x) e, so the
    integrand is ``reflected_bridge_cdf`` at rescaled level and drift.
    Adaptive Gauss-Kronrod over (-10, 10), absolute tolerance 1e-9.
    """
    lam, d, sig = params.normalized()
    t = params.t
    if sig == 0.0:
        return reflected_bridge_cdf(lam, t, d)
    lam_vec = np.atleast_1d(lam)

    def integrand(x):
        return _bridge_cdf(lam_vec, t, d - sig * x) * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    val, _ = integrate.quad_vec(integrand, -QUAD_HALF_WIDTH, QUAD_HALF_WIDTH,
                                epsabs=QUAD_EPSABS, epsrel=0.0, limit=QUAD_LIMIT)
    val = np.clip(val, 0.0, 1.0)
    return float(val[0]) if np.ndim(lam) == 0 else val


def reflected_diffusion_cdf_closed(params: ReflectedLawParams):
    lam, d, sig = params.normalized()
    t = params.t
    lam = np.asarray(lam, dtype=float)
    s_t = math.sqrt(t * (1 - t) + sig * sig * t * t)
    first = norm_cdf((lam + d * t) / s_t)
    log_second = (-2.0 * lam * (lam + d) + 2.0 * lam * lam * sig * sig
                  + log_ndtr((lam * (2 * t - 1 - 2 * sig * sig * t) + d * t) / s_t))
    out = np.where(lam <= 0.0, 0.0, first - np.exp(log_second))
    return _scalar(np.clip(out, 0.0, 1.0))


def transient_cdf_variant(params: ReflectedLawParams):
    """Reflected-diffusion law with the alternative constants (comparison only).

    Uses sigma_V in natural units and the drift d in the role of c.
    """
    lam = np.asarray(params.lam, dtype=float)
    t, c, sig = params.t, params.d, params.sigma_v
    alpha = 0.5
    beta = -sig * t / math.sqrt(t * (1 - t))
    gamma = (lam * (1 - 2 * t) + c * t) / math.sqrt(t * (1 - t))
    first = norm_cdf(gamma * math.sqrt(alpha / (alpha + beta**2))) / math.sqrt(alpha)
    second = np.exp(2 * lam**2 * (1 + sig**2) - 2 * lam * c) * norm_cdf(
        (gamma - 2 * lam * math.sqrt(t / (1 - t)) + 2 * beta * lam * sig)
        * math.sqrt(2 * alpha**2 / (2 * alpha**2 + beta**2)))
    return _scalar(first + second)


def slowly_varying_limit_cdf(lam, t, q0, a, service):
    """Transient law of the linearised limit when q(eps t)/eps -> q0 t.

    The linearised netput is Z + EV1 q0 e - a e, so the effective drift is
    a - EV1 q0.
    """
    d_eff = a - service.mean * q0
    return reflected_diffusion_cdf_closed(ReflectedLawParams.from_service(service, t, lam, d_eff))


def linearization_gap(q, slope, eps, times=None) -> float:
    """sup over [0, 1] of |q(eps t)/eps - slope t|."""
    times = np.linspace(0.0, 1.0, 1001) if times is None else np.asarray(times)
    return float(np.max(np.abs(np.asarray(q(eps * times)) / eps - slope * times)))
