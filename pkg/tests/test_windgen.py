import numpy as np
import pytest
from scipy import stats

from microdispatch.model import WindFarmParams
from microdispatch.windgen import (CorrelationError, build_scenarios, power_curve, sample_latent,
                                   sample_wind_speeds)

from oracles import weibull_mean

FARM = WindFarmParams()


def test_single_speed_nonnegative():
    v = sample_wind_speeds([FARM], np.eye(1), T=1, n=1, seed=123)
    assert v.shape == (1, 1, 1)
    assert v[0, 0, 0] >= 0


def test_weibull_mean():
    v = sample_wind_speeds([FARM], np.eye(1), T=1, n=200_000, seed=5)
    expected = weibull_mean(2.0, 8.0)
    assert expected == pytest.approx(7.0898154036, abs=1e-9)
    assert v.mean() == pytest.approx(expected, rel=5e-3)


def test_speeds_deterministic(case):
    a = sample_wind_speeds(case.wind_farms, case.correlation, 8, 100, seed=9)
    b = sample_wind_speeds(case.wind_farms, case.correlation, 8, 100, seed=9)
    assert a.tobytes() == b.tobytes()
    c = sample_wind_speeds(case.wind_farms, case.correlation, 8, 100, seed=10)
    assert not np.array_equal(a, c)


def test_farm_substreams_independent_of_other_farms():
    # farm 0's draws come from its own substream, so adding farms leaves them unchanged
    one = sample_latent([0.7], np.eye(1), 8, 50, seed=4)
    two = sample_latent([0.7, 0.3], np.eye(2), 8, 50, seed=4)
    np.testing.assert_array_equal(one[:, 0, :], two[:, 0, :])


def test_marginals_are_weibull(case):
    v = sample_wind_speeds(case.wind_farms, case.correlation, 8, 50_000, seed=3)
    for i, farm in enumerate(case.wind_farms):
        ks = stats.kstest(v[:, i, :].ravel(), stats.weibull_min(farm.weibull_shape, scale=farm.weibull_scale).cdf)
        assert ks.statistic < 0.01


def test_latent_ar1_and_cross_correlation(case):
    z = sample_latent([f.ar_coeff for f in case.wind_farms], case.correlation, 8, 50_000, seed=3)
    for i, farm in enumerate(case.wind_farms):
        lag1 = np.corrcoef(z[:, i, :-1].ravel(), z[:, i, 1:].ravel())[0, 1]
        assert lag1 == pytest.approx(farm.ar_coeff, abs=0.02)
    assert np.corrcoef(z[:, 0, 0], z[:, 1, 0])[0, 1] == pytest.approx(0.5, abs=0.02)
    assert z.std() == pytest.approx(1.0, abs=0.01)


def test_rejects_indefinite_correlation():
    corr = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(CorrelationError, match="not positive semidefinite"):
        sample_wind_speeds([FARM] * 3, corr, 2, 2, seed=0)


def test_accepts_singular_correlation():
    v = sample_wind_speeds([FARM] * 2, np.ones((2, 2)), 4, 10, seed=0)
    np.testing.assert_allclose(v[:, 0, :], v[:, 1, :])


@pytest.mark.parametrize("speed, expected", [(2.0, 0.0), (11.0, 20.0), (7.0, 10.0), (25.0, 0.0), (3.0, 0.0),
                                             (24.99, 20.0)])
def test_power_curve_points(speed, expected):
    assert power_curve(speed, FARM) == pytest.approx(expected)


def test_power_curve_monotone_then_cut_out():
    v = np.linspace(0, 24.999, 5001)
    p = power_curve(v, FARM)
    assert np.all(np.diff(p) >= 0)
    assert np.all(power_curve(np.linspace(25, 40, 50), FARM) == 0)


def test_case_scenarios_shape_and_range(case, scenarios_1000):
    sc = scenarios_1000
    assert sc.aggregate.shape == (1000, 8)
    assert sc.per_farm.shape == (1000, 4, 8)
    assert sc.aggregate.min() >= 0 and sc.aggregate.max() <= 80
    assert np.all(sc.per_farm <= 20) and np.all(sc.per_farm >= 0)
    np.testing.assert_allclose(sc.aggregate, sc.per_farm.sum(axis=1), rtol=1e-9)
    assert np.all((sc.means >= 0) & (sc.means <= 20))


def test_means_come_from_separate_draw(case):
    small = build_scenarios(case, 1, seed=2)
    big = build_scenarios(case, 1000, seed=2)
    np.testing.assert_array_equal(small.means, big.means)
    assert not np.allclose(small.mean_total, small.aggregate[0])


def test_scenario_set_deterministic(case):
    a, b = build_scenarios(case, 200, seed=11), build_scenarios(case, 200, seed=11)
    assert a.aggregate.tobytes() == b.aggregate.tobytes()
    assert a.means.tobytes() == b.means.tobytes()


def test_mean_totals_stable_across_seeds(case):
    # reference from a much larger independent draw
    ref = build_scenarios(case, 1, seed=99, mean_samples=400_000).mean_total
    assert np.all((ref > 0) & (ref < 80))
    draw = build_scenarios(case, 20_000, seed=0, mean_samples=20_000)
    se = draw.aggregate.std(axis=0) / np.sqrt(20_000)
    for seed in range(5):
        totals = build_scenarios(case, 1, seed=seed).mean_total
        assert np.all(np.abs(totals - ref) <= 4 * se)
        assert totals.mean() == pytest.approx(ref.mean(), rel=0.01)


def test_bad_sample_counts(case):
    with pytest.raises(ValueError):
        build_scenarios(case, 0, seed=0)
    with pytest.raises(ValueError):
        build_scenarios(case, 100, seed=0, mean_samples=10)
