from statistics import NormalDist

import numpy as np
import pytest

from distboost.simulation import MEAN, SimSpec, feature_names, simulate, true_variance, truth_quantile


def test_truth_median_is_mean():
    assert truth_quantile(0.5, np.array([0.1, 0.4, 0.9])) == pytest.approx([10.0] * 3)


def test_truth_quantile_against_normal_oracle():
    expect = NormalDist(10.0, 5.0**0.5).inv_cdf(0.95)
    assert truth_quantile(0.95, 0.4) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(13.678, abs=1e-3)


def test_variance_boundaries_are_strict():
    x = np.array([0.3, 0.3 + 1e-12, 0.5 - 1e-12, 0.5, 0.7, 0.7 + 1e-12])
    assert list(true_variance(x)) == [1.0, 5.0, 5.0, 1.0, 1.0, 3.0]


def test_shapes_and_names():
    train, test, truth = simulate(SimSpec(n_train=50, n_test=20, n_noise=3, seed=1))
    assert (train.n_rows, test.n_rows) == (50, 20)
    assert train.feature_names == ["x", "X1", "X2", "X3"] == feature_names(3)
    assert truth is truth_quantile


def test_seed_determinism():
    a, _, _ = simulate(SimSpec(n_train=100, n_test=10, seed=5))
    b, _, _ = simulate(SimSpec(n_train=100, n_test=10, seed=5))
    c, _, _ = simulate(SimSpec(n_train=100, n_test=10, seed=6))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.response, b.response)
    assert not np.array_equal(a.response, c.response)


def test_bad_spec():
    with pytest.raises(ValueError):
        SimSpec(n_train=0)
    with pytest.raises(ValueError):
        SimSpec(n_noise=-1)


def test_generating_moments():
    n = 100_000
    train, _, _ = simulate(SimSpec(n_train=n, n_test=1, n_noise=2, seed=3))
    x, y = train.features[:, 0], train.response
    assert abs(y.mean() - MEAN) < 4 * np.sqrt(5.0) / np.sqrt(n)
    band = (x > 0.31) & (x < 0.49)
    assert y[band].var() == pytest.approx(5.0, rel=0.05)
    assert y[x > 0.71].var() == pytest.approx(3.0, rel=0.05)
    assert y[x < 0.29].var() == pytest.approx(1.0, rel=0.05)
    for j in (1, 2):
        assert abs(np.corrcoef(train.features[:, j], y)[0, 1]) < 3 / np.sqrt(n)
    assert 0.0 <= train.features.min() and train.features.max() < 1.0
