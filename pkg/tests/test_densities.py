import numpy as np
import pytest
from scipy import integrate, stats

from coupled.densities import (
    Categorical,
    GaussianParams,
    Mixture,
    MultivariateNormal,
    TranslatedExponential,
    TruncatedNormalTail,
    Uniform,
    normal,
    robert_rate,
)
from coupled.errors import NotPositiveDefinite

from conftest import ALPHA, bank, chi2_pvalue, ks_pvalue, mvn_gof_pvalue


def test_mvn_log_pdf_matches_scipy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    sigma = a @ a.T + np.eye(3)
    mu = rng.normal(size=3)
    x = rng.normal(size=(20, 3))
    ours = MultivariateNormal(mu, sigma).log_pdf(x)
    assert np.allclose(ours, stats.multivariate_normal(mu, sigma).logpdf(x), rtol=1e-12, atol=1e-12)


def test_gaussian_params_cholesky_reconstructs():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 5))
    sigma = a @ a.T + 0.1 * np.eye(5)
    g = GaussianParams(np.zeros(5), sigma)
    assert np.linalg.norm(g.chol @ g.chol.T - sigma) <= 1e-10 * np.linalg.norm(sigma)
    assert g.log_det == pytest.approx(np.linalg.slogdet(sigma)[1], rel=1e-12)


def test_gaussian_params_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        GaussianParams([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_mvn_sampler_fits():
    mu = np.array([1.0, -2.0, 0.5])
    sigma = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]])
    x = MultivariateNormal(mu, sigma).sample(bank(1, 20000))
    assert mvn_gof_pvalue(x, mu, sigma) > ALPHA


def test_sample_many_matches_sequential_sample():
    for dens in (normal(1.0, 2.0), TranslatedExponential(3.0, 2.0), MultivariateNormal(np.zeros(2))):
        b1, b2 = bank(5, 7), bank(5, 7)
        many = dens.sample_many(b1, 4)
        seq = np.stack([dens.sample(b2) for _ in range(4)], axis=1)
        assert np.array_equal(many, seq)
        assert np.array_equal(b1.counters, b2.counters)


def test_categorical_sampler_and_pdf():
    w = np.array([0.1, 0.0, 0.6, 0.3])
    c = Categorical(w)
    assert np.allclose(np.exp(c.log_pdf([[0.0], [1.0], [2.0], [3.0]])), w)
    x = c.sample(bank(2, 20000))[:, 0].astype(int)
    assert np.all(x != 1)
    assert chi2_pvalue(np.bincount(x, minlength=4), w) > ALPHA


def test_uniform_and_mixture():
    u = Uniform(-1.0, 3.0)
    assert ks_pvalue(u.sample(bank(3, 20000)), stats.uniform(-1, 4).cdf) > ALPHA
    mix = Mixture([normal(-2.0, 1.0), normal(2.0, 0.25)], [0.3, 0.7])
    cdf = lambda v: 0.3 * stats.norm.cdf(v, -2, 1) + 0.7 * stats.norm.cdf(v, 2, 0.5)
    assert ks_pvalue(mix.sample(bank(4, 20000)), cdf) > ALPHA
    grid = np.linspace(-8, 8, 20001)
    assert np.trapezoid(mix.pdf(grid), grid) == pytest.approx(1.0, abs=1e-6)


def test_robert_rate():
    assert robert_rate(0.0) == 1.0
    assert robert_rate(2.0) == pytest.approx((2 + np.sqrt(8)) / 2, rel=1e-15)
    assert robert_rate(-50.0) == pytest.approx((-50 + np.sqrt(2504)) / 2, rel=1e-10)


def test_truncated_tail_sampler_fits_and_normalizes():
    m = 6.0
    t = TruncatedNormalTail(m)
    x = t.sample(bank(6, 50000))
    assert x.min() > m
    oracle = lambda v: 1.0 - stats.norm.sf(v) / stats.norm.sf(m)
    assert ks_pvalue(x, oracle) > ALPHA
    mass = integrate.quad(lambda v: t.pdf(v)[0], m, m + 5.0, epsabs=0.0, epsrel=1e-12)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_translated_exponential_cdf():
    e = TranslatedExponential(2.0, 3.0)
    assert e.cdf(1.0) == 0.0
    assert e.cdf(2.5) == pytest.approx(1 - np.exp(-1.5))
    assert ks_pvalue(e.sample(bank(9, 10000)), stats.expon(2.0, 1 / 3.0).cdf) > ALPHA
