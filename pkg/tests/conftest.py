import math

import numpy as np
import pytest
from scipy import stats

from coupled.rng import RngStream, StreamBank

ALPHA = 0.01


def bank(seed, lanes):
    return StreamBank.split(RngStream(seed), lanes)


def mc_se(p, n):
    return math.sqrt(max(p * (1.0 - p), 1e-12) / n)


def ks_pvalue(samples, cdf):
    return stats.kstest(np.ravel(samples), cdf).pvalue


def chi2_pvalue(counts, probs, min_expected=5.0):
    """Pooled chi-square test; cells with small expectation are merged."""
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(probs, dtype=float) * counts.sum()
    order = np.argsort(expected)
    obs_cells, exp_cells = [], []
    acc_o = acc_e = 0.0
    for k in order:
        acc_o += counts[k]
        acc_e += expected[k]
        if acc_e >= min_expected:
            obs_cells.append(acc_o)
            exp_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_cells[-1] += acc_o
        exp_cells[-1] += acc_e
    return stats.chisquare(obs_cells, exp_cells).pvalue


def mvn_gof_pvalue(samples, mu, sigma):
    """Goodness of fit of multivariate normal draws: whitened squared norms
    against chi-square(d), and each whitened coordinate against N(0, 1);
    Bonferroni-combined into a single p-value."""
    samples = np.atleast_2d(samples)
    d = samples.shape[1]
    chol = np.linalg.cholesky(np.atleast_2d(sigma))
    z = np.linalg.solve(chol, (samples - mu).T).T
    pvals = [stats.kstest(np.sum(z * z, axis=1), stats.chi2(d).cdf).pvalue]
    pvals += [stats.kstest(z[:, k], stats.norm.cdf).pvalue for k in range(d)]
    return min(1.0, min(pvals) * len(pvals))


@pytest.fixture
def rng():
    return RngStream(12345)
