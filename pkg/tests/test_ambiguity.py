"""Tests for intensity moment sets and the lifted failure set"""

import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from ehdn.core.ambiguity import (
    AmbiguityError,
    IntensityForecast,
    build_intensity_set,
    build_lpcas,
    calibrate_gammas,
    default_failure_cap,
    forecast_for_level,
    moment_set_contains,
    outcome_variance_map,
    quantile_bounds,
    select_projection_vectors,
)
from ehdn.core.fragility import EntryAffineMap, SecondMomentMap
from ehdn.models.network import Network

ONE = np.array([0])


def _single(mean: float, k0: float = 0.02, var: float = 4.0):
    """Mean and second-moment maps of one entry"""
    return (EntryAffineMap(np.array([mean]), np.array([mean / 3]), ONE),
            SecondMomentMap(np.array([k0]), np.array([k0 / 2]), ONE, np.array([[var]])))


def test_forecast_for_level(toy3):
    """Test level bands spread over zones and scaled by the ramp"""
    forecast = forecast_for_level(toy3, 1)

    np.testing.assert_allclose(forecast.wind_mean[0], [21.0, 35.0])  # inland at the floor
    np.testing.assert_allclose(forecast.wind_mean[2], [24.0, 40.0])  # coast at the ceiling
    np.testing.assert_allclose(forecast.rain_mean[1], [7.5, 12.5])
    assert forecast.covariance.shape == (12, 12)
    np.testing.assert_allclose(np.diag(forecast.covariance)[:6], 4.0)
    np.testing.assert_allclose(np.diag(forecast.covariance)[6:], 9.0)
    assert forecast.covariance[0, 1] == pytest.approx(4.0 * 0.5)  # next period, same zone
    assert forecast.covariance[0, 6] == 0.0  # wind and rain uncorrelated


def test_forecast_unknown_level(toy3):
    """Test levels outside the forecast"""
    with pytest.raises(KeyError):
        forecast_for_level(toy3, 7)


def test_intensity_set_support(toy_raw):
    """Test expected intensities must lie in the zone supports"""
    toy_raw["zones"][0]["wind_max"] = 30.0
    net = Network.model_validate(toy_raw)

    with pytest.raises(AmbiguityError, match="inland"):
        build_intensity_set(net, forecast_for_level(net, 1))


def test_intensity_set_zero_covariance(toy3):
    """Test a deterministic forecast is accepted"""
    forecast = forecast_for_level(toy3, 1)
    forecast.covariance = np.zeros((12, 12))
    amb = build_intensity_set(toy3, forecast)

    assert not amb.q_d.any()
    np.testing.assert_allclose(amb.wind, forecast.wind_mean)


def test_intensity_set_rejects_bad_covariance(toy3):
    """Test dimension and semidefiniteness checks"""
    forecast = forecast_for_level(toy3, 1)
    with pytest.raises(AmbiguityError, match="12 x 12"):
        build_intensity_set(toy3, IntensityForecast(forecast.wind_mean, forecast.rain_mean,
                                                    np.eye(3)))
    with pytest.raises(AmbiguityError, match="semidefinite"):
        build_intensity_set(toy3, IntensityForecast(forecast.wind_mean, forecast.rain_mean,
                                                    -np.eye(12)))


def test_entry_moments(toy3, toy_index):
    """Test entry intensities follow the zone forecast"""
    amb = build_intensity_set(toy3, forecast_for_level(toy3, 1))
    d_e, q_e, widths = amb.entry_moments(toy3, toy_index)

    assert d_e[1] == pytest.approx(35.0)  # L1 at t=1
    assert d_e[5] == pytest.approx(7.5 + 12.5)  # P1 accumulated
    assert q_e[0, 0] == pytest.approx(4.0)
    assert widths[1] == pytest.approx(80.0)


def test_quantile_bounds():
    """Test mean bounds mu -/+ sqrt(gamma1 Q_ii)"""
    mean = EntryAffineMap(np.array([0.3]), np.array([0.1]), ONE)
    second = SecondMomentMap(np.array([0.1]), np.array([0.05]), ONE, np.array([[4.0]]))
    lower, upper = quantile_bounds(mean, second, 0.25)

    assert (lower.v0[0], upper.v0[0]) == pytest.approx((0.2, 0.4))
    assert (lower.v1[0], upper.v1[0]) == pytest.approx((0.05, 0.15))

    lower, upper = quantile_bounds(mean, second, 0.0)
    assert lower.v0[0] == upper.v0[0] == pytest.approx(0.3)  # no mean uncertainty

    small = EntryAffineMap(np.array([0.05]), np.array([0.01]), ONE)
    lower, _ = quantile_bounds(small, second, 0.25)
    assert lower.v0[0] == 0.0  # clamped


def test_projection_vectors(toy3, toy_index):
    """Test basis vectors plus one aggregate per non-empty zone and period"""
    f = select_projection_vectors(toy3, toy_index)

    assert f.shape == (8 + 6, 8)
    np.testing.assert_allclose(f[:8].toarray(), np.eye(8))
    assert np.flatnonzero(f[10].toarray()).tolist() == [2, 4]  # valley, t=0


def test_lifted_bound_value(toy3):
    """Test delta_k(x) = gamma2 f'Q(x)f"""
    mean, second = _single(0.3)
    lpcas = build_lpcas(toy3, mean, second, 0.1, 1.0, 1, f=sp.csr_matrix([[1.0]]))

    assert lpcas.delta_values(np.zeros(1))[0] == pytest.approx(1.6e-3)
    assert lpcas.delta_values(np.ones(1))[0] == pytest.approx(1.6e-3 / 4)
    assert lpcas.k == 1


def test_lifted_set_rejects_bad_inputs(toy3):
    """Test the failure cap and projection checks"""
    mean, second = _single(0.3)
    with pytest.raises(AmbiguityError):
        build_lpcas(toy3, mean, second, 0.1, 1.0, 0, f=sp.csr_matrix([[1.0]]))
    with pytest.raises(AmbiguityError):
        build_lpcas(toy3, mean, second, 0.1, 1.0, 1, f=sp.csr_matrix((0, 1)))


def test_contains_needs_outcome_variance(toy3):
    """Test the Bernoulli variance makes the two-point distribution admissible"""
    mean, second = _single(0.3)
    two_point = [(0.7, np.array([0.0])), (0.3, np.array([1.0]))]
    f = sp.csr_matrix([[1.0]])
    x0 = np.zeros(1)

    with_var = build_lpcas(toy3, mean, second, 0.1, 1.5, 1, f=f,
                           variance=outcome_variance_map(mean))
    without = build_lpcas(toy3, mean, second, 0.1, 1.5, 1, f=f)

    assert with_var.contains(x0, two_point)
    assert not without.contains(x0, two_point)  # second moment 0.21 > 0.0024
    assert without.first_moment_only().contains(x0, two_point)
    assert not with_var.contains(x0, [(1.0, np.array([1.0]))])  # mean outside the bounds


def test_lifted_pairs(toy_problem):
    """Test only zone aggregates couple components"""
    assert toy_problem.lpcas.pairs() == {(1, 2)}  # L2 and P1 share the valley
    assert toy_problem.lpcas.first_moment_only().pairs() == set()


def test_w_quadratic_matches_values(toy_problem):
    """Test the scenario lift polynomial against direct evaluation"""
    lpcas = toy_problem.lpcas
    a = np.zeros(8)
    a[[1, 4]] = 1.0  # L1@1 and P1@0

    for bits in itertools.product([0.0, 1.0], repeat=4):
        x = np.array(bits)
        direct = lpcas.w_values(a, x)
        for r in range(lpcas.k):
            assert lpcas.w_quadratic(r, a).evaluate(x) == pytest.approx(direct[r], abs=1e-12)


def test_default_failure_cap():
    """Test the failure cap from independent upper means"""
    assert default_failure_cap(EntryAffineMap(np.zeros(4), np.zeros(4), np.arange(4))) == 1
    half = EntryAffineMap(np.full(4, 0.5), np.full(4, 0.5), np.arange(4))
    assert default_failure_cap(half) == 4


def test_moment_set_contains_mean():
    """Test a Dirac at the mean belongs to the exact moment set"""
    mean = np.array([0.2, 0.1])
    q = np.array([[0.01, 0.0], [0.0, 0.02]])

    assert moment_set_contains(mean, q, 0.1, 1.5, [(1.0, mean)])
    assert not moment_set_contains(mean, q, 0.1, 1.5, [(1.0, mean + 1.0)])


def test_calibrate_gammas():
    """Test cross-validated error ratios"""
    mean = np.array([0.2, 0.1])
    second = np.array([[0.01, 0.0], [0.0, 0.02]])
    f = sp.csr_matrix(np.eye(2))
    exact = np.tile(mean, (10, 1))

    assert calibrate_gammas(exact, mean, second, f, [0.0, 0.1], [0.5, 1.0]) == (0.0, 0.5)
    with pytest.raises(AmbiguityError, match="empty"):
        calibrate_gammas(exact, mean, second, f, [], [1.0])
    with pytest.raises(AmbiguityError, match="samples"):
        calibrate_gammas(exact[:3], mean, second, f, [0.1], [1.0])
