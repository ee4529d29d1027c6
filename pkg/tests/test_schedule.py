import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from guidance_lab.errors import ConfigError, DomainError
from guidance_lab.schedule import (
    Schedule,
    lambda_cdf,
    lambda_distribution_cdf,
    noise_level,
    sample_lambda,
    timestep_grid,
)

# high-precision reference (mpmath, 40 digits) for lambda = 20
ALPHA2_AT_20 = 0.99999999793884638181
SIGMA2_AT_20 = 2.061153618190203581430862e-9


def test_noise_level_at_zero(schedule):
    level = noise_level(schedule, 0.0)
    assert level.alpha == pytest.approx(math.sqrt(0.5), abs=1e-16)
    assert level.sigma == pytest.approx(math.sqrt(0.5), abs=1e-16)


def test_noise_level_at_twenty(schedule):
    level = noise_level(schedule, 20.0)
    assert level.alpha**2 == pytest.approx(ALPHA2_AT_20, rel=1e-15)
    assert level.sigma**2 == pytest.approx(SIGMA2_AT_20, rel=1e-14)


@given(st.floats(-20, 20))
def test_variance_preserving(lam):
    level = noise_level(Schedule(), lam)
    assert abs(level.alpha**2 + level.sigma**2 - 1) <= 4e-16
    assert level.alpha**2 == pytest.approx(1 / (1 + math.exp(-lam)), rel=1e-14)


def test_alpha_sigma_monotone(schedule):
    lam = np.linspace(-19.9, 19.9, 2001)
    levels = [noise_level(schedule, l) for l in lam]
    alpha = np.array([l.alpha for l in levels])
    sigma = np.array([l.sigma for l in levels])
    assert np.all(np.diff(alpha) > 0) and np.all(np.diff(sigma) < 0)
    assert np.all((alpha > 0) & (alpha < 1) & (sigma > 0) & (sigma < 1))


@pytest.mark.parametrize("lam", [-20.000001, 20.5, float("nan")])
def test_noise_level_out_of_range(schedule, lam):
    with pytest.raises(DomainError):
        noise_level(schedule, lam)


def test_out_of_range_message_names_bound(schedule):
    with pytest.raises(DomainError, match="lambda_max"):
        noise_level(schedule, 21.0)
    with pytest.raises(DomainError, match="lambda_min"):
        noise_level(schedule, -21.0)


def test_schedule_invariants():
    with pytest.raises(ConfigError):
        Schedule(1.0, 1.0)
    with pytest.raises(ConfigError):
        Schedule(2.0, -2.0)
    s = Schedule(-7.0, 13.0)
    assert s.a > 0 and s.b > 0


@pytest.mark.parametrize("bounds", [(-20.0, 20.0), (-7.0, 13.0), (-3.0, 0.5)])
def test_sample_lambda_endpoints(bounds):
    s = Schedule(*bounds)
    assert sample_lambda(s, 0.0) == s.lambda_max
    assert sample_lambda(s, 1.0) == s.lambda_min


def test_sample_lambda_symmetric_median():
    assert sample_lambda(Schedule(-20.0, 20.0), 0.5) == 0.0
    assert sample_lambda(Schedule(-5.0, 5.0), 0.5) == 0.0


def test_sample_lambda_domain(schedule):
    for u in (-1e-9, 1.0 + 1e-9, float("nan")):
        with pytest.raises(DomainError):
            sample_lambda(schedule, u)


def test_sample_lambda_matches_formula(schedule):
    u = np.linspace(0.05, 0.95, 19)
    direct = -2 * np.log(np.tan(schedule.a * u + schedule.b))
    assert np.allclose(sample_lambda(schedule, u), direct, rtol=0, atol=1e-11)


def test_cdf_endpoints(schedule):
    assert lambda_cdf(schedule, schedule.lambda_max) == 0.0
    assert lambda_cdf(schedule, schedule.lambda_min) == 1.0


def test_cdf_domain(schedule):
    with pytest.raises(DomainError):
        lambda_cdf(schedule, 25.0)


@given(st.floats(0.0, 1.0))
def test_cdf_inverts_sampler(u):
    s = Schedule()
    assert abs(lambda_cdf(s, sample_lambda(s, u)) - u) <= 1e-10


@given(st.floats(-20.0, 20.0))
def test_sampler_inverts_cdf(lam):
    s = Schedule()
    assert abs(sample_lambda(s, lambda_cdf(s, lam)) - lam) <= 1e-10


def test_ks_against_analytic_cdf(schedule):
    rng = np.random.default_rng(0)
    draws = sample_lambda(schedule, rng.random(100_000))
    result = stats.kstest(draws, lambda x: lambda_distribution_cdf(schedule, np.clip(x, -20, 20)))
    assert result.pvalue > 0.01


def test_distribution_is_hyperbolic_secant_like(schedule):
    # density of lam is proportional to sech(lam/2) in the interior
    lam = np.array([-4.0, -1.0, 0.0, 2.0, 6.0])
    h = 1e-5
    dens = (lambda_distribution_cdf(schedule, lam + h) - lambda_distribution_cdf(schedule, lam - h)) / (2 * h)
    ratio = dens / (1 / np.cosh(lam / 2))
    assert np.allclose(ratio, ratio[0], rtol=1e-6)


def test_grid_endpoints_and_order(schedule):
    assert list(timestep_grid(schedule, 2)) == [-20.0, 20.0]
    g = timestep_grid(schedule, 3)
    assert g[1] == 0.0
    for T in (4, 17, 1024):
        g = timestep_grid(schedule, T)
        assert len(g) == T and g[0] == -20.0 and g[-1] == 20.0
        assert np.all(np.diff(g) > 0)


def test_grid_uniform_in_u(schedule):
    g = timestep_grid(schedule, 11)
    u = lambda_cdf(schedule, g)
    assert np.allclose(u, np.linspace(1, 0, 11), atol=1e-12)


@pytest.mark.parametrize("T", [1, 0, -3, 2.5])
def test_grid_rejects_small_T(schedule, T):
    with pytest.raises(ConfigError):
        timestep_grid(schedule, T)


@pytest.mark.parametrize("bounds", [(-20.0, 20.0), (-5.0, 5.0)])
def test_cdf_symmetric_median(bounds):
    assert lambda_cdf(Schedule(*bounds), 0.0) == 0.5


@pytest.mark.parametrize("bounds", [(-7.0, 13.0), (-3.0, 0.5)])
def test_cdf_matches_arctan_formula(bounds):
    s = Schedule(*bounds)
    lam = np.linspace(s.lambda_min, s.lambda_max, 41)
    direct = (np.arctan(np.exp(-lam / 2)) - s.b) / s.a
    assert np.allclose(lambda_cdf(s, lam), direct, rtol=0, atol=1e-13)
