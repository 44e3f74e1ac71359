import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from rsqueue.core import Grid, RandomStream, ScatterModel, ServiceModel, ks_statistic, ks_two_sample, z_process_paths
from rsqueue.errors import DomainError
from rsqueue.periodic import (
    PeriodicGaussParams,
    det_service_steady,
    periodic_fluid,
    periodic_steady_cdf,
    periodic_transient_cdf,
    periodic_workload_at,
    periodic_z_paths,
    phi_steady,
    slot_index,
)
from rsqueue.queue import PeriodicConfig, periodic_workload_samples, simulate_offered

EXP1 = ServiceModel.exponential(1.0)
UNIF = ScatterModel.uniform()
# mean sqrt(0.75), variance 0.25: unit second moment
PARAMS = PeriodicGaussParams(0.5, math.sqrt(0.75), 0.25)
# service with the same mean and variance as PARAMS
EXP_LIKE = ServiceModel.gamma(0.75 / 0.25, 0.25 / math.sqrt(0.75))


def test_slot_index():
    assert slot_index(0.0) == 1
    assert slot_index(1.0) == 1
    assert slot_index(1.0 + 1e-12) == 2
    assert list(slot_index([0.3, 2.0, 2.5])) == [1, 2, 3]


def test_periodic_fluid_same_slot():
    assert periodic_fluid(1.2, 1.7, EXP1, UNIF) == pytest.approx(0.5)


def test_periodic_fluid_full_period():
    for s in (0.0, 0.3, 2.6):
        assert periodic_fluid(s, s + 1.0, EXP1, UNIF) == pytest.approx(1.0)


def test_periodic_fluid_rejects_bad_interval():
    with pytest.raises(DomainError):
        periodic_fluid(1.0, 0.5, EXP1, UNIF)


def test_periodic_offered_work_follows_fluid():
    n = 10_000
    rng = RandomStream(3).generator()
    periods = [simulate_offered(EXP1, UNIF, n, rng) for _ in range(3)]
    pairs = [(0.0, 0.4), (0.2, 1.3), (0.9, 2.1), (1.5, 2.95)]
    for s, t in pairs:
        total = 0.0
        for k, off in enumerate(periods):
            shifted = off.arrivals + k
            mask = (shifted > s) & (shifted <= t)
            total += off.works[mask].sum()
        assert abs(total / n - periodic_fluid(s, t, EXP1, UNIF)) <= 0.03


def test_z_paths_variance_at_slot_ends():
    grid = Grid(0.0, 3.0, 12)
    z = periodic_z_paths(PARAMS, grid, 100_000, RandomStream(4))
    for k in (1, 2, 3):
        idx = int(np.argmin(np.abs(grid.times - k)))
        assert abs(np.var(z[:, idx]) - k * PARAMS.variance) <= 0.01 * k


def test_z_paths_first_slot_is_single_period_process():
    grid = Grid(0.0, 1.0, 8)
    z = periodic_z_paths(PARAMS, grid, 20_000, RandomStream(14))
    single = z_process_paths(EXP_LIKE, UNIF, grid, 20_000, RandomStream(15))
    for idx in (2, 4, 7):
        assert ks_two_sample(z[:, idx], single[:, idx]) <= 0.02


def test_z_paths_continuous_across_slots():
    grid = Grid(0.0, 3.0, 300)
    z = periodic_z_paths(PARAMS, grid, 1000, RandomStream(16))
    jumps = np.abs(np.diff(z, axis=1))
    # one cell of a process with variance rate at most EV1^2 + sigma^2
    scale = math.sqrt(PARAMS.second_moment * grid.dt)
    for k in (100, 200):
        assert jumps[:, k - 1:k + 1].max() <= 6 * scale


def test_z_paths_first_slot_variance():
    # inside slot 1: Var = EV1^2 u (1 - u) + sigma^2 u
    grid = Grid(0.0, 1.0, 4)
    z = periodic_z_paths(PARAMS, grid, 40_000, RandomStream(5))
    u = grid.times[1:]
    expected = PARAMS.mean**2 * u * (1 - u) + PARAMS.variance * u
    assert np.allclose(np.var(z[:, 1:], axis=0), expected, rtol=0.05)
    assert np.all(z[:, 0] == 0.0)


def test_z_paths_need_origin():
    with pytest.raises(DomainError):
        periodic_z_paths(PARAMS, Grid(0.5, 1.0, 4), 10, RandomStream(0))


def test_phi_at_zero():
    assert phi_steady(0.0, 0.5) == 0.0


def test_phi_reduces_to_reflected_drift_law():
    lam = np.linspace(0.0, 3.0, 13)
    assert np.allclose(phi_steady(lam, 0.7, 1.0, 0.0), 1 - np.exp(-2 * lam * (lam + 0.7)))


def test_phi_matches_single_slot_simulation():
    target = phi_steady(1.0, 0.5, PARAMS.second_moment, PARAMS.variance)
    assert target == pytest.approx(0.91792, abs=1e-5)
    w = periodic_workload_at(PARAMS, 1.0, 100_000, RandomStream(6))
    assert abs(np.mean(w <= 1.0) - target) <= 0.01


def test_det_service_steady_values():
    assert det_service_steady(0.0) == 0.0
    assert det_service_steady(1.0) == pytest.approx(0.98168, abs=1e-5)
    x = np.linspace(0.0, 3.0, 31)
    assert np.all(np.diff(det_service_steady(x)) > 0)


def test_det_service_steady_against_bridge_simulation():
    # sup_u (B0(u) - u) with exact bridge minima between grid points
    from rsqueue.core import bridge_at, segment_minima

    rng = RandomStream(7).generator()
    u = np.linspace(0.0, 1.0, 129)
    y = -(bridge_at(u, 50_000, rng) - u)
    lows = segment_minima(y, np.diff(u), rng).min(axis=1)
    sup = -np.minimum(lows, 0.0)
    assert ks_statistic(sup, det_service_steady) <= 0.01


def test_transient_equals_phi_in_first_period():
    lam = np.linspace(0.0, 4.0, 81)
    got = periodic_transient_cdf(lam, PARAMS.at(1.0))
    assert np.array_equal(got, phi_steady(lam, PARAMS.a, PARAMS.second_moment, PARAMS.variance))


def test_unclamped_transient_reaches_steady_law():
    lam = np.linspace(0.0, 4.0, 41)
    got = periodic_transient_cdf(lam, PARAMS.at(1000.0), clamp=False)
    assert np.max(np.abs(got - periodic_steady_cdf(lam, PARAMS))) <= 1e-6


@pytest.mark.xfail(strict=True, reason="clamping phi at negative levels leaves a gap of about 0.31")
def test_clamped_transient_reaches_steady_law():
    lam = np.linspace(0.0, 4.0, 41)
    got = periodic_transient_cdf(lam, PARAMS.at(1000.0))
    assert np.max(np.abs(got - periodic_steady_cdf(lam, PARAMS))) <= 1e-6


@pytest.mark.xfail(strict=True, reason="simulated workload at t = 25 sits about 0.31 in KS from the closed form")
def test_transient_matches_simulation_at_t25():
    w = periodic_workload_at(PARAMS.at(25.0), 25.0, 20_000, RandomStream(8))
    assert ks_statistic(w, lambda v: periodic_transient_cdf(v, PARAMS.at(25.0))) <= 0.02


def test_transient_non_increasing_in_time():
    lam = np.linspace(0.0, 3.0, 31)
    prev = periodic_transient_cdf(lam, PARAMS.at(1.0))
    for t in (2.0, 3.0, 5.0, 10.0, 25.0, 100.0):
        cur = periodic_transient_cdf(lam, PARAMS.at(t))
        assert np.all(cur <= prev + 1e-12)
        prev = cur


def test_steady_law_without_load():
    params = PeriodicGaussParams(0.8, 1.0, 0.3)
    assert periodic_steady_cdf(0.0, params) == pytest.approx(1 - norm.cdf(0.8))
    assert periodic_steady_cdf(50.0, params) == pytest.approx(1.0)
    assert periodic_steady_cdf(-1.0, params) == 0.0


def test_steady_law_stated_value():
    assert periodic_steady_cdf(1.0, PARAMS) == pytest.approx(0.94324, abs=1e-5)


@pytest.mark.xfail(strict=True, reason="simulated P(W <= 1) at p_t = 50 is about 0.87")
def test_steady_law_matches_simulation():
    w = periodic_workload_at(PARAMS.at(50.0), 50.0, 20_000, RandomStream(9), cells_per_period=16)
    assert abs(np.mean(w <= 1.0) - periodic_steady_cdf(1.0, PARAMS)) <= 0.01


@given(st.floats(1e-3, 10.0), st.floats(0.0, 100.0))
def test_steady_state_hypothesis_holds_for_positive_mean(mean, variance):
    assert PeriodicGaussParams(0.5, mean, variance).has_steady_state


def test_params_domain():
    with pytest.raises(DomainError):
        PeriodicGaussParams(0.5, t=0.5)
    with pytest.raises(DomainError):
        PeriodicGaussParams(0.5, mean=0.0)


@pytest.mark.xfail(strict=True, reason="pre-limit queue at t = 5.5 carries the accumulated slot variance; KS is about 0.085")
def test_bounded_service_queue_matches_phi():
    n = 10_000
    bounded = ServiceModel.uniform(0.75, 1.25)
    cfg = PeriodicConfig(n, UNIF, 6)
    c = n * bounded.mean + 0.5 * math.sqrt(n)
    w = periodic_workload_samples(cfg, bounded, c, 5.5, 10_000, seed=17) / math.sqrt(n)
    assert ks_statistic(w, lambda v: phi_steady(v, 0.5, bounded.second_moment, bounded.variance)) <= 0.03


# a < 0 has no stable regime and the steady expression is then not a distribution
@given(st.floats(0.0, 2.0), st.floats(0.0, 0.9), st.floats(1.0, 30.0))
def test_cdfs_are_monotone_and_bounded(a, variance, t):
    params = PeriodicGaussParams(a, 1.0, variance, t)
    lam = np.linspace(0.0, 5.0, 26)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curves = [periodic_transient_cdf(lam, params), periodic_steady_cdf(lam, params),
                  phi_steady(lam, a, params.second_moment, variance)]
    for c in curves:
        assert np.all((c >= 0.0) & (c <= 1.0))
        assert np.all(np.diff(c) >= -1e-12)


def test_periodic_config_rejects_bad_period():
    with pytest.raises(ValueError):
        PeriodicConfig(10, UNIF, 0)
