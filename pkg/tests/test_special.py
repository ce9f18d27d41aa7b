import math

import numpy as np
import pytest
import scipy.special as sps
import scipy.stats as stats

from permatch.special import (
    log_beta,
    log_inc_beta,
    reg_inc_beta,
    sample_truncated_beta,
    sample_truncated_beta_fast,
)


def test_complete_beta_identity():
    # B(1; 2, 3) = B(2, 3) = 1/12
    assert math.exp(log_inc_beta(1.0, 2.0, 3.0)) == pytest.approx(1.0 / 12.0, rel=1e-13)
    assert log_inc_beta(1.0, 2.0, 3.0) == pytest.approx(log_beta(2.0, 3.0), abs=1e-14)


def test_uniform_integrand():
    assert math.exp(log_inc_beta(0.5, 1.0, 1.0)) == pytest.approx(0.5, rel=1e-13)


def test_polynomial_integral():
    # int_0^{1/2} x^2 (1-x) dx = 5/192
    assert math.exp(log_inc_beta(0.5, 3.0, 2.0)) == pytest.approx(5.0 / 192.0, rel=1e-12)


def test_matches_scipy_regularized_on_grid():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a = math.exp(rng.uniform(math.log(0.05), math.log(300.0)))
        b = math.exp(rng.uniform(math.log(0.05), math.log(300.0)))
        x = rng.uniform(1e-6, 1.0 - 1e-6)
        ours = reg_inc_beta(x, a, b)
        ref = sps.betainc(a, b, x)
        assert ours == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_log_form_accurate_in_deep_tail():
    # a large, x small: the unregularized integral underflows a plain exp
    val = log_inc_beta(1e-3, 50.0, 2.0)
    ref = math.log(sps.betainc(50.0, 2.0, 1e-3)) + sps.betaln(50.0, 2.0)
    assert val == pytest.approx(ref, rel=1e-10)


def test_domain_errors():
    with pytest.raises(ValueError):
        log_inc_beta(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        log_inc_beta(0.5, -1.0, 1.0)
    with pytest.raises(ValueError):
        reg_inc_beta(1.5, 1.0, 1.0)


def test_truncated_uniform_mean():
    rng = np.random.default_rng(7)
    draws = np.array([sample_truncated_beta(1.0, 1.0, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(0.25, abs=0.002)
    assert draws.max() < 0.5 and draws.min() > 0.0


def test_truncated_support_strict():
    rng = np.random.default_rng(3)
    for a, b in ((0.5, 0.5), (2.0, 5.0), (10.0, 1.0)):
        draws = [sample_truncated_beta(a, b, rng) for _ in range(2000)]
        assert all(0.0 < x < 0.5 for x in draws)


def _truncated_cdf(a, b):
    denom = reg_inc_beta(0.5, a, b)
    return lambda x: np.array([reg_inc_beta(float(t), a, b) / denom for t in np.atleast_1d(x)])


def test_truncated_cdf_kolmogorov_smirnov():
    rng = np.random.default_rng(11)
    draws = np.array([sample_truncated_beta(2.0, 5.0, rng) for _ in range(100_000)])
    res = stats.kstest(draws, _truncated_cdf(2.0, 5.0))
    assert res.pvalue > 1e-3


def test_fast_sampler_same_law():
    rng = np.random.default_rng(13)
    # a case where rejection is comfortable and one where it falls back often
    for a, b in ((2.0, 5.0), (30.0, 2.0)):
        draws = np.array([sample_truncated_beta_fast(a, b, rng) for _ in range(60_000)])
        assert draws.max() < 0.5
        res = stats.kstest(draws, _truncated_cdf(a, b))
        assert res.pvalue > 1e-3
