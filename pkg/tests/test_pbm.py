import math

import numpy as np
import pytest
from scipy import stats

from rqm.errors import DomainError, ParameterError
from rqm.pbm import PbmParams, pbm_decode_aggregate, pbm_for_levels, pbm_pmf, pbm_sample, pbm_sample_array


def _product_form(m, p):
    return np.array([math.comb(m, i) * p**i * (1 - p) ** (m - i) for i in range(m + 1)])


@pytest.mark.parametrize("theta", [0.0, 0.5, 0.7, -0.1])
def test_theta_range(theta):
    with pytest.raises(ParameterError):
        PbmParams(c=1.0, theta=theta, m=4)


def test_trials_validation():
    with pytest.raises(ParameterError):
        PbmParams(c=1.0, theta=0.2, m=0)


def test_small_theta_is_fair_binomial():
    params = PbmParams(c=1.0, theta=1e-12, m=10)
    for x in (-1.0, 0.0, 1.0):
        np.testing.assert_allclose(pbm_pmf(x, params), _product_form(10, 0.5), atol=1e-11)


def test_zero_input_symmetric():
    p = pbm_pmf(0.0, PbmParams(c=2.0, theta=0.3, m=9))
    np.testing.assert_allclose(p, p[::-1], atol=1e-15)


def test_reference_case_matches_product_form_and_scipy():
    params = PbmParams(c=1.5, theta=0.25, m=16)
    p = pbm_pmf(1.5, params)
    assert int(np.argmax(p)) == 12
    np.testing.assert_allclose(p, _product_form(16, 0.75), rtol=1e-12)
    np.testing.assert_allclose(p, stats.binom.pmf(np.arange(17), 16, 0.75), rtol=1e-12)


@pytest.mark.parametrize("x", [-1.0, -0.3, 0.4, 1.0])
def test_mean_linearity(x):
    params = PbmParams(c=1.0, theta=0.35, m=15)
    p = pbm_pmf(x, params)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.dot(np.arange(16), p) == pytest.approx(15 * (0.5 + 0.35 * x), abs=1e-10)


def test_domain():
    with pytest.raises(DomainError):
        pbm_pmf(1.01, PbmParams(c=1.0, theta=0.2, m=3))


def test_for_levels():
    assert pbm_for_levels(1.5, 0.25, 16).m == 15
    assert pbm_for_levels(1.5, 0.25, 16, match_support=False).m == 16


def test_sampler_mean_and_consumption():
    params = PbmParams(c=1.0, theta=0.25, m=16)
    rng = np.random.default_rng(3)
    z = pbm_sample_array(np.full(200_000, 0.6), params, rng)
    p = 0.5 + 0.25 * 0.6
    assert abs(z.mean() - 16 * p) < 4 * math.sqrt(16 * p * (1 - p) / len(z))

    a, b = np.random.default_rng(4), np.random.default_rng(4)
    xs = np.linspace(-1, 1, 11)
    assert [pbm_sample(x, params, a) for x in xs] == pbm_sample_array(xs, params, b).tolist()
    assert a.random() == b.random()


def test_single_trial_is_bernoulli():
    params = PbmParams(c=1.0, theta=0.4, m=1)
    rng = np.random.default_rng(5)
    z = pbm_sample_array(np.full(100_000, -0.5), params, rng)
    assert set(np.unique(z)) <= {0, 1}
    assert abs(z.mean() - 0.3) < 4 * math.sqrt(0.21 / len(z))


def test_sampler_matches_pmf():
    params = PbmParams(c=1.0, theta=0.3, m=8)
    rng = np.random.default_rng(6)
    n = 300_000
    z = pbm_sample_array(np.full(n, 0.2), params, rng)
    tv = 0.5 * np.abs(np.bincount(z, minlength=9) / n - pbm_pmf(0.2, params)).sum()
    assert tv < 3 * math.sqrt(9 / n)


def test_decode_is_unbiased_in_expectation():
    params = PbmParams(c=2.0, theta=0.25, m=15)
    xs = np.array([1.3, -0.4, 2.0])
    expected_sum = sum(np.dot(np.arange(16), pbm_pmf(x, params)) for x in xs)
    assert pbm_decode_aggregate(expected_sum, 3, params) == pytest.approx(xs.mean(), abs=1e-12)
    with pytest.raises(DomainError):
        pbm_decode_aggregate(46, 3, params)
