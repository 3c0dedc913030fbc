import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eimstore.calibrate import (DataError, PriceSeries, daily_average, fit_ou_mle, ou_loglik, read_price_csv,
                                simulate_ou_series, truncate, write_price_csv)


def quarter_hourly(values_per_day, start="2012-06-01"):
    values = np.concatenate(values_per_day)
    n = len(values)
    ts = np.datetime64(start + "T00:00:00", "s") + np.arange(n) * np.timedelta64(900, "s")
    return PriceSeries(ts, values, 900.0)


def test_daily_average_basic():
    s = quarter_hourly([np.full(96, 7.0), np.full(96, 7.0)])
    d = daily_average(s)
    assert np.all(d.values == 7.0) and len(d) == 2
    alt = quarter_hourly([np.tile([0.0, 100.0], 48)])
    assert daily_average(alt).values[0] == 50.0


def test_daily_average_four_years():
    days = 1461
    rng = np.random.default_rng(0)
    s = quarter_hourly([rng.normal(30, 10, 96) for _ in range(days)])
    d = daily_average(s)
    assert len(d) == days and d.meta["days_kept"] == days


def test_sparse_days_dropped():
    s = quarter_hourly([np.ones(96), np.ones(96)])
    keep = np.r_[np.arange(96), np.arange(96, 96 + 30)]
    sparse = PriceSeries(s.timestamps[keep], s.values[keep], 900.0)
    d = daily_average(sparse)
    assert len(d) == 1 and d.meta["days_sparse"] == 1


def test_truncate():
    s = PriceSeries(np.array(["2013-01-01", "2013-01-02", "2013-01-03"], dtype="datetime64[s]"),
                    np.array([-6002.0, 12.5, 6344.0]), 86400.0)
    t = truncate(s, -150, 150)
    assert list(t.values) == [-150.0, 12.5, 150.0]
    with pytest.raises(ValueError):
        truncate(s, 150, -150)


def test_csv_round_trip_and_errors(tmp_path):
    s = simulate_ou_series(2.0, 1.0, 0.5, 1 / 365.25, 50, seed=1)
    p = tmp_path / "a.csv"
    write_price_csv(p, s)
    back = read_price_csv(p)
    assert np.array_equal(back.values, s.values) and np.array_equal(back.timestamps, s.timestamps)
    bad = tmp_path / "bad.csv"
    bad.write_text("2012-06-01,1\n2012-06-02,x\n")
    with pytest.raises(DataError, match="row 2"):
        read_price_csv(bad)
    bad.write_text("t;p\n2012-06-01;1\n2012-06-01;2\n")
    with pytest.raises(DataError, match="duplicate"):
        read_price_csv(bad, delimiter=";")


def test_fit_matches_regression_estimator():
    s = simulate_ou_series(68.69, 30.99, 483.33, 1 / 365.25, 1461, seed=5)
    dt = 1 / 365.25
    fit = fit_ou_mle(s, dt)
    x0, x1 = s.values[:-1], s.values[1:]
    slope, icpt = np.polyfit(x0, x1, 1)
    resid = x1 - (icpt + slope * x0)
    theta = -math.log(slope) / dt
    assert fit.theta == pytest.approx(theta, rel=1e-7)
    assert fit.mu == pytest.approx(icpt / (1 - slope), rel=1e-7)
    sigma = math.sqrt(np.mean(resid ** 2) * 2 * theta / (1 - slope ** 2))
    assert fit.sigma == pytest.approx(sigma, rel=1e-7)
    assert fit.loglik == pytest.approx(ou_loglik(s.values, dt, fit.theta, fit.mu, fit.sigma), rel=1e-12)


def test_unit_equivariance():
    s = simulate_ou_series(68.69, 30.99, 483.33, 1 / 365.25, 500, seed=9)
    y = fit_ou_mle(s, 1 / 365.25, "year")
    d = fit_ou_mle(s, 1.0, "day")
    assert y.theta == pytest.approx(d.theta * 365.25, rel=1e-6)
    assert y.sigma == pytest.approx(d.sigma * math.sqrt(365.25), rel=1e-6)
    assert y.mu == pytest.approx(d.mu, rel=1e-9)


@given(st.floats(-100, 100), st.floats(0.1, 50))
@settings(max_examples=10, deadline=None)
def test_affine_equivariance(shift, scale):
    s = simulate_ou_series(5.0, 1.0, 2.0, 1 / 365.25, 300, seed=2)
    f = fit_ou_mle(s.values, 1 / 365.25)
    g = fit_ou_mle(shift + scale * s.values, 1 / 365.25)
    assert g.theta == pytest.approx(f.theta, rel=1e-6)
    assert g.mu == pytest.approx(shift + scale * f.mu, rel=1e-6, abs=1e-6 * scale)
    assert g.sigma == pytest.approx(scale * f.sigma, rel=1e-6)


def test_white_noise_limit():
    rng = np.random.default_rng(3)
    x = rng.normal(12.0, 3.0, 2000)
    fit = fit_ou_mle(x, 1.0, "day")
    assert fit.mu == pytest.approx(x.mean(), abs=0.05)


def test_degenerate_inputs():
    with pytest.raises(DataError):
        fit_ou_mle(np.full(100, 3.0), 1.0)
    with pytest.raises(DataError):
        fit_ou_mle(np.arange(10.0), 1.0)
    ts = np.datetime64("2012-06-01", "s") + np.array([0, 1, 3] + list(range(4, 40))) * np.timedelta64(86400, "s")
    with pytest.raises(DataError, match="equally spaced"):
        fit_ou_mle(PriceSeries(ts, np.random.default_rng(0).normal(size=len(ts)), 86400.0), 1.0)


def test_estimator_unbiased_over_replications():
    # the estimator, not a single draw, is what the tolerance band should describe
    fits = [fit_ou_mle(simulate_ou_series(68.69, 30.99, 483.33, 1 / 365.25, 1461, seed=1000 + k), 1 / 365.25)
            for k in range(60)]
    mu = np.array([f.mu for f in fits])
    sigma = np.array([f.sigma for f in fits])
    assert abs(mu.mean() - 30.99) < 4 * mu.std(ddof=1) / math.sqrt(len(mu))
    assert abs(sigma.mean() / 483.33 - 1) < 0.01
