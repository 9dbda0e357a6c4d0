import math

import numpy as np
import pytest
from scipy.stats import chi2 as chi2_dist
from scipy.stats import poisson

from confsim.core import SeedSpec, derive_stream
from confsim.onoff import (
    OnOffData,
    OnOffParams,
    lambda_onoff,
    log_likelihood,
    mu_hat,
    nu_hat,
    simulate_onoff,
)


def test_data_validation():
    with pytest.raises(ValueError):
        OnOffData(-1, 0)
    with pytest.raises(ValueError):
        OnOffParams(-0.1, 1.0)


def test_log_likelihood_trivial():
    assert log_likelihood(OnOffData(0, 0), OnOffParams(0.0, 0.0)) == 0.0


def test_log_likelihood_value():
    # N log 5 - 5 - log 3! + M log 5 - 5 - log 7!
    want = (3 * math.log(5) - 5 - math.log(6)
            + 7 * math.log(5) - 5 - math.log(5040))
    got = log_likelihood(OnOffData(3, 7), OnOffParams(0.0, 5.0))
    assert got == pytest.approx(want, rel=1e-13)


def test_log_likelihood_zero_rate_positive_count():
    assert log_likelihood(OnOffData(0, 1), OnOffParams(2.0, 0.0)) == -math.inf


def test_mu_hat():
    assert mu_hat(OnOffData(3, 7)) == 0.0
    assert mu_hat(OnOffData(10, 4)) == 6.0
    assert mu_hat(OnOffData(6, 6)) == 0.0


def test_nu_hat():
    assert nu_hat(OnOffData(3, 7)) == 5.0
    assert nu_hat(OnOffData(10, 4)) == 4.0
    assert nu_hat(OnOffData(6, 6)) == 6.0


def test_hat_identities():
    rng = np.random.default_rng(1)
    for _ in range(500):
        d = OnOffData(int(rng.integers(0, 40)), int(rng.integers(0, 40)))
        if d.N > d.M:
            assert mu_hat(d) + nu_hat(d) == d.N
            assert nu_hat(d) == d.M
        else:
            assert mu_hat(d) == 0.0
            assert 2.0 * nu_hat(d) == d.N + d.M


def test_lambda_spot_values():
    d = OnOffData(3, 7)
    assert lambda_onoff(d, OnOffParams(0.0, 5.0)) == 0.0
    want = 2.0 - 6.0 * math.log(1.2)
    assert abs(lambda_onoff(d, OnOffParams(1.0, 5.0)) - want) <= 1e-12
    assert lambda_onoff(OnOffData(0, 0), OnOffParams(0.0, 0.0)) == 0.0


def test_lambda_infinite_for_impossible_rates():
    assert lambda_onoff(OnOffData(3, 7), OnOffParams(0.0, 0.0)) == math.inf


def test_lambda_nonnegative_randomized():
    # defining property of the restricted maximizer, searched over the prior box
    rng = np.random.default_rng(99)
    n_pairs = 1_000_000
    mu = rng.uniform(0.0, 20.0, n_pairs)
    nu = rng.uniform(0.0, 20.0, n_pairs)
    N = rng.poisson(rng.uniform(0.0, 40.0, n_pairs))
    M = rng.poisson(rng.uniform(0.0, 40.0, n_pairs))
    # vectorized transcription of lambda_onoff for the search
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (np.where(N > 0, N * np.log(mu + nu), 0.0) - (mu + nu)
               + np.where(M > 0, M * np.log(nu), 0.0) - nu)
        muh = np.where(N > M, N - M, 0.0)
        nuh = np.where(N > M, M, (N + M) / 2.0)
        den = (np.where(N > 0, N * np.log(muh + nuh), 0.0) - (muh + nuh)
               + np.where(M > 0, M * np.log(nuh), 0.0) - nuh)
    lam = -2.0 * (num - den)
    lam = np.where(np.isnan(lam), np.inf, lam)  # 0 * log 0 rows
    assert np.all(lam >= -1e-9)
    # spot-check the transcription against the scalar implementation
    for k in range(0, n_pairs, 100_000):
        want = lambda_onoff(OnOffData(int(N[k]), int(M[k])),
                            OnOffParams(float(mu[k]), float(nu[k])))
        assert lam[k] == pytest.approx(want, rel=1e-10) or (
            math.isinf(want) and math.isinf(lam[k])
        )


def test_simulate_zero_rates():
    rng = derive_stream(SeedSpec(0), 0)
    for _ in range(20):
        d = simulate_onoff(OnOffParams(0.0, 0.0), rng)
        assert (d.N, d.M) == (0, 0)


def test_simulate_moments():
    rng = derive_stream(SeedSpec(17), 0)
    n = 100_000
    p = OnOffParams(5.0, 5.0)
    draws = np.array([(d.N, d.M) for d in (simulate_onoff(p, rng) for _ in range(n))])
    # mean of N is 10 within 5 sigma of the CLT error, variance of M near 5
    assert abs(draws[:, 0].mean() - 10.0) < 0.05
    assert abs(draws[:, 1].var() - 5.0) < 0.15


def test_simulate_poisson_gof():
    # chi-square goodness of fit at the 1% level for total rate 10
    rng = derive_stream(SeedSpec(23), 0)
    n = 100_000
    p = OnOffParams(5.0, 5.0)
    counts = np.array([simulate_onoff(p, rng).N for _ in range(n)])
    hi = int(poisson.isf(1e-6, 10.0))
    observed = np.bincount(np.clip(counts, 0, hi), minlength=hi + 1).astype(float)
    expected = poisson.pmf(np.arange(hi + 1), 10.0) * n
    expected[-1] += (1.0 - poisson.cdf(hi, 10.0)) * n
    keep = expected > 5.0
    stat = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
    crit = chi2_dist.ppf(0.99, keep.sum() - 1)
    assert stat < crit
