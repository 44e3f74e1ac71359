import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from rsqueue.core import Grid, GridPath, RandomStream, ScatterModel, ServiceModel, brownian_bridge_paths, ks_statistic
from rsqueue.limits import (
    Regime,
    diffusion_limit_cdf,
    diffusion_workload_at,
    diffusion_workload_path,
    diffusion_workload_paths,
    fclt_gap,
    fluid_workload,
    fluid_workload_curve,
    fslln_gap,
    reflect,
    reflection_map,
)
from rsqueue.transient import ReflectedLawParams, reflected_bridge_cdf, reflected_diffusion_cdf_closed

EXP1 = ServiceModel.exponential(1.0)
DET1 = ServiceModel.deterministic(1.0)
UNIF = ScatterModel.uniform()


def test_reflection_of_nondecreasing_path():
    x = GridPath(0.0, 1.0, np.array([1.0, 1.5, 1.5, 3.0]))
    assert np.array_equal(reflection_map(x).values, x.values - 1.0)


def test_reflection_of_pure_drain():
    t = np.linspace(0.0, 1.0, 11)
    assert np.all(reflection_map(GridPath(0.0, 1.0, -t)).values == 0.0)


def test_reflection_matches_brute_force():
    t = np.linspace(0.0, 4 * math.pi, 300)
    x = np.sin(t) + 0.1 * t
    fast = reflection_map(GridPath(0.0, t[-1], x)).values
    brute = np.array([max(x[k] - x[j] for j in range(k + 1)) for k in range(x.size)])
    assert np.allclose(fast, brute, atol=1e-15)


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=60), st.integers(-10**6, 10**6))
def test_reflection_shift_invariant_and_dominating(values, shift):
    x = np.asarray(values, dtype=float)
    w = reflect(x)
    assert np.array_equal(reflect(x + shift), w)
    assert np.all(w >= 0)
    for k in range(x.size):
        assert np.all(w[k] >= x[k] - x[: k + 1])


def test_fluid_balanced_is_zero():
    for t in np.linspace(0.0, 1.0, 11):
        assert fluid_workload(t, EXP1, UNIF, 1.0) == 0.0


def test_fluid_overloaded_endpoint():
    assert fluid_workload(1.0, ServiceModel.exponential(2.0), UNIF, 1.0) == pytest.approx(1.0, abs=1e-8)


def test_fluid_overdrained():
    assert fluid_workload(0.7, EXP1, ScatterModel.exponential(3.0), 100.0) == 0.0


def test_fluid_lipschitz_in_t():
    service, scatter, rho = ServiceModel.exponential(2.0), ScatterModel.exponential(3.0), 1.5
    times = np.linspace(0.0, 2.0, 401)
    curve = fluid_workload_curve(times, service, scatter, rho)
    bound = (service.mean * 3.0 + rho) * (times[1] - times[0])
    assert np.all(np.abs(np.diff(curve)) <= bound + 1e-9)


def test_diffusion_path_reduces_to_reflected_bridge():
    grid = Grid(0.0, 1.0, 128)
    w = diffusion_workload_path(Regime(DET1), grid, RandomStream(1))
    b = brownian_bridge_paths(grid, 1, RandomStream(1))[0]
    assert np.allclose(w.values, reflect(b), atol=1e-14)


def test_diffusion_workload_vs_transient_law():
    service = ServiceModel.gamma(4.0, 0.25)
    w = diffusion_workload_at(Regime(service, a=0.5), 0.5, 10_000, RandomStream(2))
    ks = ks_statistic(w, lambda v: reflected_diffusion_cdf_closed(ReflectedLawParams.from_service(service, 0.5, v, 0.5)))
    assert ks <= 0.02


def _sub_probability_mean(b, a):
    # given B0(b) = y the netput is a bridge from 0 to y - a of length b
    def mean_given(y):
        z = y - a
        lo = max(0.0, -z)
        tail, _ = integrate.quad(lambda m: math.exp(-2 * m * (m + z) / b), lo, np.inf)
        return z + lo + tail

    sd = math.sqrt(b * (1 - b))
    val, _ = integrate.quad(lambda y: mean_given(y) * math.exp(-0.5 * (y / sd) ** 2) / (sd * math.sqrt(2 * math.pi)),
                            -10 * sd, 10 * sd)
    return val


def test_sub_probability_regime_mean():
    w = diffusion_workload_at(Regime(DET1, a=0.5, b=0.5), 1.0, 100_000, RandomStream(3))
    assert abs(w.mean() - _sub_probability_mean(0.5, 0.5)) < 4 * w.std() / math.sqrt(w.size)


def test_diffusion_paths_nonnegative():
    paths = diffusion_workload_paths(Regime(EXP1, a=0.3), Grid(0.0, 1.0, 50), 200, RandomStream(4))
    assert np.all(paths >= 0)


def test_fclt_balanced():
    assert fclt_gap(10_000, EXP1, UNIF, Regime(EXP1), 10_000, 0.5, seed=5) <= 0.02


def test_fclt_drift_is_a_for_non_unit_mean():
    # c = n EV1 + a sqrt(n) gives the netput drift -a, not -a EV1
    service = ServiceModel.exponential(2.0)
    assert fclt_gap(10_000, service, UNIF, Regime(service, a=0.5), 10_000, 0.5, seed=6) <= 0.02


def test_fclt_gap_shrinks_with_n():
    small, large = [], []
    for k in range(5):
        small.append(fclt_gap(100, EXP1, UNIF, Regime(EXP1), 4000, 0.5, seed=100 + k))
        large.append(fclt_gap(10_000, EXP1, UNIF, Regime(EXP1), 4000, 0.5, seed=200 + k))
    assert np.median(small) > np.median(large)


def test_deterministic_limit_is_reflected_bridge():
    levels = np.linspace(0.0, 3.0, 31)
    assert np.allclose(diffusion_limit_cdf(Regime(DET1), 0.4, levels), reflected_bridge_cdf(levels, 0.4, 0.0),
                       atol=1e-12)


def test_fslln_gap():
    assert fslln_gap(100_000, ServiceModel.exponential(2.0), ScatterModel.exponential(1.0), 1.0, 3.0,
                     RandomStream(7)) <= 0.02
