import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from coupled.errors import DegenerateGap, DomainError
from coupled.tails import (
    build_tail_tables,
    coupled_tail_sampler,
    optimal_rate,
    sample_max_coupled_exponentials,
    tail_acceptance_ratio,
    tail_dominating_pair,
    tail_overlap,
)

from conftest import ALPHA, bank, ks_pvalue, mc_se
from suite import tail_cdf

N = 10**5


def expon(m):
    return stats.expon(loc=m, scale=1.0 / optimal_rate(m))


def quad_exp_overlap(mu, eta):
    p, q = expon(mu), expon(eta)
    f = lambda v: min(p.pdf(v), q.pdf(v))
    t = build_tail_tables(mu, eta)
    return sum(integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0]
               for a, b in ((eta, t.gamma_cross), (t.gamma_cross, t.gamma_cross + 60)))


def mp_tail_overlap(mu, eta):
    """High-precision overlap of the truncated normals: the lower-truncated
    density is larger on the common support, so the overlap is the upper
    one's mass above eta under the lower one's normalizer."""
    mpmath.mp.dps = 40
    lo, hi = min(mu, eta), max(mu, eta)
    return float(mpmath.erfc(hi / mpmath.sqrt(2)) / mpmath.erfc(lo / mpmath.sqrt(2)))


def test_optimal_rate_examples():
    assert optimal_rate(0.0) == 1.0
    assert optimal_rate(2.0) == pytest.approx(2.414213562, abs=1e-9)
    assert optimal_rate(6.5) > optimal_rate(6.0)


def test_acceptance_ratio_examples():
    assert tail_acceptance_ratio(optimal_rate(3.0), 3.0) == 1.0
    assert tail_acceptance_ratio(optimal_rate(6.0) + 1.0, 6.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    with pytest.raises(DomainError):
        tail_acceptance_ratio(5.0, 6.0)


def test_acceptance_high_for_robert_proposal():
    x = expon(6.0).ppf(bank(1, 1).uniform(20000)[0])
    assert tail_acceptance_ratio(x, 6.0).mean() > 0.9


def test_table_identities_grid():
    rng = np.random.default_rng(0)
    for _ in range(100):
        mu, eta = np.sort(rng.uniform(5.0, 12.0, size=2))
        t = build_tail_tables(mu, eta)
        assert abs(t.zc - (t.zc1 + t.zc2)) <= 1e-12
        assert abs(t.zp - (t.zp1 + t.zp2)) <= 1e-12
        assert abs(t.zc + t.zp - 1.0) <= 1e-12
        assert abs(t.zc + t.zq - 1.0) <= 1e-12
        assert t.gamma_cross >= t.eta
        for z in (t.zc, t.zc1, t.zc2, t.zp, t.zp1, t.zp2, t.zq):
            assert 0.0 < z < 1.0


def test_crossing_point_equal_densities():
    t = build_tail_tables(6.0, 7.0)
    assert expon(6.0).logpdf(t.gamma_cross) == pytest.approx(expon(7.0).logpdf(t.gamma_cross), abs=1e-10)


def test_zc_matches_quadrature():
    assert build_tail_tables(6.0, 7.0).zc == pytest.approx(quad_exp_overlap(6.0, 7.0), abs=1e-8)


def test_zc_limit():
    assert build_tail_tables(6.0, 6.0 + 1e-4).zc > 0.999


def test_degenerate_gap():
    with pytest.raises(DegenerateGap):
        build_tail_tables(6.0, 6.0)
    with pytest.raises(DegenerateGap):
        build_tail_tables(7.0, 6.0)


def test_branch_round_trips():
    t = build_tail_tables(6.0, 6.7)
    u = np.linspace(0.001, 0.999, 999)
    for cdf, inv in ((t.c1_cdf, t.c1_inv), (t.c2_cdf, t.c2_inv), (t.p2_cdf, t.p2_inv),
                     (t.p1_cdf, t.p1_inv), (t.q_cdf, t.q_inv)):
        assert np.max(np.abs(cdf(inv(u)) - u)) <= 1e-10


def _tabulated_inverse(cdf, lo, hi, u):
    grid = np.linspace(lo, hi, 10**6)
    vals = cdf(grid)
    return np.interp(u, vals, grid)


def test_root_inverses_match_tabulation():
    t = build_tail_tables(6.0, 6.7)
    u = np.linspace(0.01, 0.99, 99)
    lo, hi = t.gamma_cross, t.gamma_cross + 20.0 / t.rate_mu
    assert np.max(np.abs(t.p1_inv(u) - _tabulated_inverse(t.p1_cdf, lo, hi, u))) <= 1e-8
    assert np.max(np.abs(t.q_inv(u) - _tabulated_inverse(t.q_cdf, t.eta, t.gamma_cross, u))) <= 1e-8


def test_coupled_exponentials():
    t = build_tail_tables(6.0, 6.5)
    d = sample_max_coupled_exponentials(t, bank(2, N))
    assert abs(d.met_rate - t.zc) <= 3 * mc_se(t.zc, N)
    assert np.all(d.x[d.met] >= 6.5)
    assert ks_pvalue(d.x, expon(6.0).cdf) > ALPHA
    assert ks_pvalue(d.y, expon(6.5).cdf) > ALPHA


def test_tail_overlap_oracle():
    for eta in (6.1, 6.5, 7.0):
        assert tail_overlap(6.0, eta) == pytest.approx(mp_tail_overlap(6.0, eta), rel=1e-9)


def test_equal_truncations_meet():
    d = coupled_tail_sampler(6.0, 6.0, 1, bank(3, 20000))
    assert d.met_rate >= 0.95


def test_sampler_marginals():
    d = coupled_tail_sampler(6.0, 6.4, 1, bank(4, N))
    assert np.all(d.x > 6.0) and np.all(d.y > 6.4)
    assert ks_pvalue(d.x, tail_cdf(6.0)) > ALPHA
    assert ks_pvalue(d.y, tail_cdf(6.4)) > ALPHA


def test_sampler_swapped_order():
    d = coupled_tail_sampler(6.4, 6.0, 1, bank(5, 20000))
    assert np.all(d.x > 6.4) and np.all(d.y > 6.0)
    assert ks_pvalue(d.x, tail_cdf(6.4)) > ALPHA


def test_sampler_met_near_overlap():
    n = 20000
    for k, eta in enumerate((6.1, 6.5, 7.0)):
        d = coupled_tail_sampler(6.0, eta, 1, bank(10 + k, n))
        target = mp_tail_overlap(6.0, eta)
        assert abs(d.met_rate - target) <= 0.02
        assert d.met_rate <= target + 3 * mc_se(target, n)


def test_sampler_rejects_bad_input():
    with pytest.raises(DomainError):
        coupled_tail_sampler(-1.0, 1.0, 1, bank(6, 1))
    with pytest.raises(ValueError):
        coupled_tail_sampler(1.0, 2.0, 0, bank(6, 1))


def test_dominating_pair_bounds():
    dom = tail_dominating_pair(6.0, 6.5)
    x = np.linspace(6.5, 12.0, 2000)
    for m, hat, bound in ((6.0, dom.p_hat, dom.m_p), (6.5, dom.q_hat, dom.m_q)):
        lp = stats.norm.logpdf(x) - stats.norm.logsf(m)
        assert np.all(lp <= math.log(bound) + hat.log_pdf(x) + 1e-9)
