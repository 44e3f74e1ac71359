"""Service-time and arrival-scattering laws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError

SERVICE_KINDS = ("deterministic", "exponential", "uniform", "gamma", "lognormal")


def _expm1_over(z):
    """(e^z - 1)/z with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(safe) / safe)


def _uniform_first_moment_tilt(z):
    """E[U e^{zU}] for U ~ Uniform(0,1)."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.1
    safe = np.where(small, 1.0, z)
    big = (np.exp(safe) * (safe - 1.0) + 1.0) / safe**2
    series = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(16):
        series = series + term / (k + 2)
        term = term * z / (k + 1)
    return np.where(small, series, big)


@dataclass(frozen=True)
class ServiceModel:
    """Law of a single job's work requirement V.

    Build with the classmethods; ``params`` holds the kind-specific reals:
    deterministic ``(v,)``, exponential ``(mean,)``, uniform ``(lo, hi)``,
    gamma ``(shape, scale)``, lognormal ``(mu, sigma)``.  The lognormal kind
    has no moment generating function (``theta_max == 0``) and exists for
    simulation only.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise ValueError(f"unknown service kind {self.kind!r}")
        p = self.params
        if self.kind == "deterministic" and p[0] < 0:
            raise ValueError("deterministic work must be >= 0")
        if self.kind == "exponential" and p[0] <= 0:
            raise ValueError("exponential mean must be > 0")
        if self.kind == "uniform" and not 0 <= p[0] <= p[1]:
            raise ValueError("uniform bounds must satisfy 0 <= lo <= hi")
        if self.kind == "gamma" and (p[0] <= 0 or p[1] <= 0):
            raise ValueError("gamma shape and scale must be > 0")
        if self.kind == "lognormal" and p[1] < 0:
            raise ValueError("lognormal sigma must be >= 0")

    @classmethod
    def deterministic(cls, v: float = 1.0) -> "ServiceModel":
        return cls("deterministic", (float(v),))

    @classmethod
    def exponential(cls, mean: float = 1.0) -> "ServiceModel":
        return cls("exponential", (float(mean),))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ServiceModel":
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "ServiceModel":
        return cls("gamma", (float(shape), float(scale)))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "ServiceModel":
        return cls("lognormal", (float(mu), float(sigma)))

    @classmethod
    def from_dict(cls, doc: dict) -> "ServiceModel":
        kind = doc["kind"]
        args = {k: v for k, v in doc.items() if k != "kind"}
        return getattr(cls, kind)(**args)

    # moments -----------------------------------------------------------------
    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k in ("deterministic", "exponential"):
            return p[0]
        if k == "uniform":
            return 0.5 * (p[0] + p[1])
        if k == "gamma":
            return p[0] * p[1]
        return math.exp(p[0] + 0.5 * p[1] ** 2)

    @property
    def variance(self) -> float:
        k, p = self.kind, self.params
        if k == "deterministic":
            return 0.0
        if k == "exponential":
            return p[0] ** 2
        if k == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if k == "gamma":
            return p[0] * p[1] ** 2
        return math.expm1(p[1] ** 2) * math.exp(2 * p[0] + p[1] ** 2)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2

    @property
    def scv(self) -> float:
        """Squared coefficient of variation."""
        return self.variance / self.mean**2

    @property
    def theta_max(self) -> float:
        """Supremum of the open domain on which the MGF is finite."""
        k, p = self.kind, self.params
        if k in ("deterministic", "uniform"):
            return math.inf
        if k == "exponential":
            return 1.0 / p[0]
        if k == "gamma":
            return 1.0 / p[1]
        return 0.0

    @property
    def upper_bound(self) -> float:
        k, p = self.kind, self.params
        if k == "deterministic":
            return p[0]
        if k == "uniform":
            return p[1]
        return math.inf

    # generating functions ----------------------------------------------------
    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta >= self.theta_max):
            raise DomainError(
                f"theta must be < theta_max={self.theta_max} for {self.kind} service"
            )
        return theta

    def mgf(self, theta):
        """E exp(theta V)."""
        theta = self._check_theta(theta)
        k, p = self.kind, self.params
        if k == "deterministic":
            out = np.exp(theta * p[0])
        elif k == "exponential":
            out = 1.0 / (1.0 - theta * p[0])
        elif k == "uniform":
            lo, hi = p
            out = np.exp(theta * lo) * _expm1_over(theta * (hi - lo))
        else:
            out = (1.0 - theta * p[1]) ** (-p[0])
        return out if out.ndim else float(out)

    def mgf_prime(self, theta):
        """E[V exp(theta V)], the derivative of the MGF."""
        theta = self._check_theta(theta)
        k, p = self.kind, self.params
        if k == "deterministic":
            out = p[0] * np.exp(theta * p[0])
        elif k == "exponential":
            out = p[0] / (1.0 - theta * p[0]) ** 2
        elif k == "uniform":
            lo, hi = p
            w = hi - lo
            e = np.exp(theta * lo)
            out = lo * e * _expm1_over(theta * w) + w * e * _uniform_first_moment_tilt(theta * w)
        else:
            out = p[0] * p[1] * (1.0 - theta * p[1]) ** (-p[0] - 1.0)
        return out if out.ndim else float(out)

    def mgf_gap(self, delta):
        """(phi, phi') at theta = theta_max - delta, accurate for tiny delta."""
        delta = np.asarray(delta, dtype=float)
        k, p = self.kind, self.params
        if k == "exponential":
            base = p[0] * delta
            return 1.0 / base, p[0] / (base * base)
        if k == "gamma":
            base = p[1] * delta
            return base ** (-p[0]), p[0] * p[1] * base ** (-p[0] - 1.0)
        raise DomainError(f"{k} service has no finite theta_max")

    # sampling ----------------------------------------------------------------
    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "deterministic":
            return np.full(size, p[0])
        if k == "exponential":
            return rng.exponential(p[0], size)
        if k == "uniform":
            return rng.uniform(p[0], p[1], size)
        if k == "gamma":
            return rng.gamma(p[0], p[1], size)
        return rng.lognormal(p[0], p[1], size)

    def tilted_sample(self, theta: float, size, rng: np.random.Generator) -> np.ndarray:
        """Draw from the exponentially tilted law e^{theta v} P(V in dv) / mgf(theta)."""
        self._check_theta(theta)
        if theta == 0.0:
            return self.sample(size, rng)
        k, p = self.kind, self.params
        if k == "deterministic":
            return np.full(size, p[0])
        if k == "exponential":
            return rng.exponential(p[0] / (1.0 - theta * p[0]), size)
        if k == "gamma":
            return rng.gamma(p[0], p[1] / (1.0 - theta * p[1]), size)
        lo, hi = p
        u = rng.random(size)
        return lo + np.log1p(u * np.expm1(theta * (hi - lo))) / theta

    def to_dict(self) -> dict:
        names = {
            "deterministic": ("v",),
            "exponential": ("mean",),
            "uniform": ("lo", "hi"),
            "gamma": ("shape", "scale"),
            "lognormal": ("mu", "sigma"),
        }[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.params))}


SCATTER_KINDS = ("uniform", "exponential", "sub_probability", "perturbed_uniform")


@dataclass(frozen=True)
class ScatterModel:
    """Law F of a customer's arrival epoch.

    ``sub_probability`` wraps a base law and keeps only ``mass`` of it finite:
    with probability ``1 - mass`` (the deficit) the customer never arrives.
    ``perturbed_uniform`` is F(t) = t + q(t)/sqrt(n) on [0, 1], clipped into
    [0, 1] and made monotone; ``a`` is the matching service-rate coefficient.
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    rate: float = 1.0
    base: "ScatterModel | None" = None
    mass: float = 1.0
    q: Callable | None = field(default=None, compare=False)
    a: float = 0.0
    n: int = 1

    def __post_init__(self):
        if self.kind not in SCATTER_KINDS:
            raise ValueError(f"unknown scatter kind {self.kind!r}")
        if not 0.0 < self.mass <= 1.0:
            raise ValueError("finite mass must lie in (0, 1]")
        if self.kind == "uniform" and not self.hi > self.lo:
            raise ValueError("uniform scatter needs hi > lo")
        if self.kind == "sub_probability" and self.base is None:
            raise ValueError("sub-probability scatter needs a base law")

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "ScatterModel":
        return cls("uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "ScatterModel":
        return cls("exponential", rate=float(rate))

    @classmethod
    def sub_probability(cls, base: "ScatterModel", mass: float) -> "ScatterModel":
        return cls("sub_probability", base=base, mass=float(mass))

    @classmethod
    def perturbed_uniform(cls, q: Callable, n: int, a: float = 0.0) -> "ScatterModel":
        return cls("perturbed_uniform", q=q, n=int(n), a=float(a))

    @classmethod
    def from_dict(cls, doc: dict) -> "ScatterModel":
        doc = dict(doc)
        kind = doc.pop("kind")
        if kind == "sub_probability":
            return cls.sub_probability(cls.from_dict(doc["base"]), doc["mass"])
        if kind == "perturbed_uniform":
            raise ValueError("perturbed_uniform needs a callable q; build it in code")
        return getattr(cls, kind)(**doc)

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        if self.kind == "exponential":
            return {"kind": "exponential", "rate": self.rate}
        if self.kind == "sub_probability":
            return {"kind": "sub_probability", "base": self.base.to_dict(), "mass": self.mass}
        return {"kind": "perturbed_uniform", "n": self.n, "a": self.a}

    @property
    def total_mass(self) -> float:
        """F(infinity)."""
        return self.mass if self.kind == "sub_probability" else 1.0

    @property
    def deficit(self) -> float:
        return 1.0 - self.total_mass

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return self.lo, self.hi
        if self.kind == "perturbed_uniform":
            return 0.0, 1.0
        if self.kind == "sub_probability":
            return self.base.support
        return 0.0, math.inf

    def _perturbed(self, t):
        t = np.clip(t, 0.0, 1.0)
        q = np.asarray(self.q(t), dtype=float) if self.q is not None else 0.0
        return np.clip(t + q / math.sqrt(self.n), 0.0, 1.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "uniform":
            out = np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        elif k == "exponential":
            out = np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)
        elif k == "sub_probability":
            out = self.mass * self.base.cdf(t)
        else:
            # running max over a fine grid keeps the clipped law monotone
            grid = np.linspace(0.0, 1.0, 4097)
            env = np.maximum.accumulate(self._perturbed(grid))
            out = np.where(t >= 1.0, 1.0, np.interp(t, grid, env))
            out = np.where(t <= 0.0, 0.0, out)
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "uniform":
            out = np.where((t >= self.lo) & (t <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        elif k == "exponential":
            out = np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)
        elif k == "sub_probability":
            out = self.mass * self.base.pdf(t)
        else:
            h = 1e-6
            out = (self.cdf(t + h) - self.cdf(t - h)) / (2 * h)
        return out if out.ndim else float(out)

    def quantile(self, u):
        """Generalized inverse of F; levels at or above F(infinity) map to +inf."""
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "uniform":
            out = self.lo + u * (self.hi - self.lo)
        elif k == "exponential":
            out = -np.log1p(-np.minimum(u, 1.0)) / self.rate
        elif k == "sub_probability":
            inside = u < self.mass
            v = np.where(inside, u / self.mass, 0.0)
            out = np.where(inside, self.base.quantile(v), np.inf)
        else:
            lo = np.zeros_like(u)
            hi = np.ones_like(u)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                below = self.cdf(mid) < u
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            out = hi
        return out if out.ndim else float(out)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Unsorted i.i.d. draws; arrivals that never happen are +inf."""
        k = self.kind
        if k == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if k == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        if k == "sub_probability":
            keep = rng.random(size) < self.mass
            return np.where(keep, self.base.sample(size, rng), np.inf)
        return self.quantile(rng.random(size))
