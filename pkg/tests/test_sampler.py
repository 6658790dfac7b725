import numpy as np
import pytest
from scipy import stats

from qradjust import ConfigError, DataError, FitError, SamplerConfig, fit_ald_regression, fit_all_levels
from qradjust.sampler import _inverse_gaussian, read_draws_csv, write_draws_csv


def _data(rng, n=80):
    x = rng.uniform(-1, 1, n)
    X = np.column_stack([np.ones(n), x])
    y = 1.0 + 2.0 * x + rng.normal(size=n)
    return X, y


def test_config_defaults_retain_1000_draws():
    # [PAPER] 31500 draws, burn-in 1500, thinning 30
    cfg = SamplerConfig()
    assert (cfg.total_draws, cfg.burn_in, cfg.thin) == (31500, 1500, 30)
    assert cfg.retained == 1000


@pytest.mark.parametrize("kw", [dict(total_draws=0), dict(burn_in=600, total_draws=600), dict(thin=0),
                                dict(total_draws=10, burn_in=5, thin=5), dict(prior_beta_sd=0.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SamplerConfig(**kw)


def test_shapes_and_determinism(rng, fast_cfg):
    X, y = _data(rng)
    a = fit_all_levels(y, X, [0.25, 0.5, 0.75], fast_cfg)
    b = fit_all_levels(y, X, [0.25, 0.5, 0.75], fast_cfg)
    assert [d.p for d in a] == [0.25, 0.5, 0.75]
    for da, db in zip(a, b):
        assert da.beta.shape == (fast_cfg.retained, 2)
        assert da.sigma.shape == (fast_cfg.retained,)
        np.testing.assert_array_equal(da.beta, db.beta)
        np.testing.assert_array_equal(da.sigma, db.sigma)
        assert not da.beta.flags.writeable


def test_batched_fit_equals_single_level_fits(rng, fast_cfg):
    # a level's chain must not depend on which other levels share the batch
    X, y = _data(rng)
    grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    batch = fit_all_levels(y, X, grid, fast_cfg)
    for j, p in enumerate(grid):
        single = fit_ald_regression(y, X, p, fast_cfg, level_index=j)
        np.testing.assert_array_equal(single.beta, batch[j].beta)
        np.testing.assert_array_equal(single.sigma, batch[j].sigma)


def test_different_seeds_differ(rng, fast_cfg):
    X, y = _data(rng)
    a = fit_ald_regression(y, X, 0.5, fast_cfg)
    b = fit_ald_regression(y, X, 0.5, SamplerConfig(600, 100, 5, seed=12))
    assert not np.array_equal(a.beta, b.beta)


def test_posterior_tracks_true_quantile_lines(rng):
    # [DERIVED] y = 1 + 2x + N(0,1): the tau-quantile line has intercept 1 + z_tau and slope 2
    x = rng.uniform(-1, 1, 400)
    X = np.column_stack([np.ones_like(x), x])
    y = 1 + 2 * x + rng.normal(size=400)
    draws = fit_all_levels(y, X, [0.2, 0.5, 0.8], SamplerConfig(3000, 500, 5, seed=3))
    for d in draws:
        intercept, slope = d.beta.mean(axis=0)
        assert intercept == pytest.approx(1 + stats.norm.ppf(d.p), abs=0.25)
        assert slope == pytest.approx(2.0, abs=0.35)
        assert np.all(d.sigma > 0)


def test_inverse_gaussian_moments():
    # [DERIVED] oracle: inverse Gaussian mean m and variance m^3 / shape
    g = np.random.default_rng(5)
    for mean, shape in [(0.5, 2.0), (3.0, 0.7), (200.0, 5.0), (1e-3, 1e-2)]:
        draws = _inverse_gaussian(mean, shape, g.standard_normal(400_000), g.random(400_000))
        assert draws.mean() == pytest.approx(mean, rel=0.02)
        assert draws.var() == pytest.approx(mean**3 / shape, rel=0.08)
        ks = stats.kstest(draws, stats.invgauss(mean / shape, scale=shape).cdf)
        assert ks.pvalue > 1e-4


def test_inverse_gaussian_is_positive_for_extreme_means():
    g = np.random.default_rng(6)
    out = _inverse_gaussian(np.array([1e8, 1e-8]), 1.0, g.standard_normal(2), g.random(2))
    assert np.all(out > 0) and np.all(np.isfinite(out))


def test_input_errors(rng, fast_cfg):
    X, y = _data(rng, 30)
    with pytest.raises(FitError):
        fit_ald_regression(y, np.column_stack([X, X[:, 1]]), 0.5, fast_cfg)
    y_bad = y.copy()
    y_bad[3] = np.nan
    with pytest.raises(DataError):
        fit_ald_regression(y_bad, X, 0.5, fast_cfg)
    with pytest.raises(DataError):
        fit_ald_regression(y[:-1], X, 0.5, fast_cfg)
    with pytest.raises(ConfigError):
        fit_all_levels(y, X, [0.5, 0.3], fast_cfg)


def test_draws_csv_round_trip(tmp_path, rng, fast_cfg):
    X, y = _data(rng, 40)
    d = fit_ald_regression(y, X, 0.3, fast_cfg)
    path = tmp_path / "d.csv"
    write_draws_csv(path, d)
    back = read_draws_csv(path, 0.3)
    np.testing.assert_array_equal(back.beta, d.beta)
    np.testing.assert_array_equal(back.sigma, d.sigma)


def test_intercept_only_tracks_sample_quantiles():
    # [DERIVED] oracle: empirical sample quantiles of the same data, default chain settings
    y = np.random.default_rng(500).standard_normal(500)
    med, upper = fit_all_levels(y, np.ones((500, 1)), [0.5, 0.9], SamplerConfig(seed=1))
    assert abs(med.beta[:, 0].mean() - np.median(y)) <= 0.15
    assert abs(upper.beta[:, 0].mean() - np.quantile(y, 0.9)) <= 0.2
    assert np.all(med.sigma > 0) and np.all(upper.sigma > 0)
