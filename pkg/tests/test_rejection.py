import math

import numpy as np
import pytest
from scipy import stats

from coupled.densities import GaussianParams, MultivariateNormal, normal
from coupled.errors import DominationViolated, InvalidAlpha, NoCoupledProposals
from coupled.gaussian import gaussian_dominating_pair
from coupled.rejection import (
    DominatingPair,
    check_domination,
    duplicated_proposal,
    ensemble_rejection_couple,
    ensemble_size_rule,
    ensemble_state,
    estimate_diagnostics,
    maximal_dominating_pair,
    rejection_couple,
)
from coupled.rng import RngStream, StreamBank, split_stream

from conftest import ALPHA, bank, ks_pvalue, mc_se
from suite import duplicated_gaussian_case, normal_scale_bound

N = 10**5


def gaussian_overlap(shift):
    return 2.0 * stats.norm.cdf(-abs(shift) / 2.0)


def test_exact_proposals_accept_first_step():
    p, q = normal(0, 1), normal(1.5, 1)
    dom = maximal_dominating_pair(p, q, 1.0, 1.0)
    d = rejection_couple(dom, p, q, bank(1, N))
    assert np.all(d.steps == 1)
    target = gaussian_overlap(1.5)
    assert abs(d.met_rate - target) <= 3 * mc_se(target, N)


def test_equal_covariance_recovers_reflection_coupling():
    sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
    p, q = GaussianParams([0.0, 0.0], sigma), GaussianParams([0.5, -0.4], sigma)
    dom = gaussian_dominating_pair(p, q, "opt")
    d = rejection_couple(dom, MultivariateNormal(params=p), MultivariateNormal(params=q), bank(2, N))
    z = np.linalg.solve(np.linalg.cholesky(sigma), p.mu - q.mu)
    target = 2.0 * stats.norm.cdf(-0.5 * np.linalg.norm(z))
    assert np.all(d.steps == 1)
    assert abs(d.met_rate - target) <= 3 * mc_se(target, N)


def test_tau_moments_below_bound():
    case = duplicated_gaussian_case(0.0, 1.0)
    d = rejection_couple(case.dom, case.p, case.q, bank(3, N))
    m = case.m_min
    steps = d.steps.astype(float)
    assert steps.mean() <= m + 3 * steps.std() / math.sqrt(N)
    assert steps.var() <= m * m - m + 3 * np.std((steps - steps.mean()) ** 2) / math.sqrt(N)


def test_marginals_duplicated_gaussian():
    case = duplicated_gaussian_case(0.0, 1.0)
    d = rejection_couple(case.dom, case.p, case.q, bank(4, 50000))
    assert case.gof_x(d.x) > ALPHA and case.gof_y(d.y) > ALPHA


def test_met_rate_below_proposal_met_rate():
    p, q = GaussianParams([0.0], [[1.0]]), GaussianParams([1.0], [[2.0]])
    dom = gaussian_dominating_pair(p, q)
    d = rejection_couple(dom, MultivariateNormal(params=p), MultivariateNormal(params=q), bank(5, N))
    _, _, met_hat = dom.sample_coupled(bank(6, N))
    assert d.met_rate <= met_hat.mean() + 3 * mc_se(met_hat.mean(), N)
    assert d.met_rate >= 1e-5


def test_domination_violation_raises():
    p, q = normal(0, 1), normal(0, 1)
    dom = duplicated_proposal(normal(0, 0.5), 1.0, 1.0)
    with pytest.raises(DominationViolated):
        rejection_couple(dom, p, q, bank(7, 1000))
    with pytest.raises(DominationViolated):
        check_domination(dom, p, q, RngStream(0))


def test_check_domination_passes_for_valid_pair():
    case = duplicated_gaussian_case(0.0, 1.0)
    check_domination(case.dom, case.p, case.q, RngStream(1))


def test_bound_below_one_rejected():
    with pytest.raises(DominationViolated):
        duplicated_proposal(normal(0, 1), 0.5, 1.0)


def test_single_stream_matches_bank_lane():
    case = duplicated_gaussian_case(0.0, 1.0)
    parent = RngStream(77)
    batched = ensemble_rejection_couple(case.dom, case.p, case.q, 4, StreamBank.split(parent, 20))
    for k in (0, 7, 19):
        solo = ensemble_rejection_couple(case.dom, case.p, case.q, 4, split_stream(parent, k))
        assert np.array_equal(solo.x, batched.x[k]) and np.array_equal(solo.y, batched.y[k])
        assert solo.steps == batched.steps[k]


# --- ensemble -----------------------------------------------------------------


def test_ensemble_n1_matches_plain():
    case = duplicated_gaussian_case(0.0, 1.0)
    a = rejection_couple(case.dom, case.p, case.q, bank(8, N))
    b = ensemble_rejection_couple(case.dom, case.p, case.q, 1, bank(9, N))
    se = math.sqrt(2) * mc_se(a.met_rate, N)
    assert abs(a.met_rate - b.met_rate) <= 3 * se
    assert ks_pvalue(b.x, stats.norm(0, 1).cdf) > ALPHA


def test_ensemble_monotone_and_maximal():
    case = duplicated_gaussian_case(0.0, 1.0)
    rates = [ensemble_rejection_couple(case.dom, case.p, case.q, n, bank(10 + n, 20000)).met_rate
             for n in (1, 16, 128)]
    se = mc_se(0.6, 20000)
    assert rates[0] <= rates[1] + 3 * se and rates[1] <= rates[2] + 3 * se
    assert abs(rates[2] - gaussian_overlap(1.0)) <= 3 * se + 0.005


def test_ensemble_tau_bound():
    case = duplicated_gaussian_case(0.0, 1.0)
    n = 8
    d = ensemble_rejection_couple(case.dom, case.p, case.q, n, bank(20, N))
    bound = (n + case.m_min - 1) / n
    steps = d.steps.astype(float)
    assert steps.mean() <= bound + 3 * steps.std() / math.sqrt(N)


class _Reversed:
    """Coupler returning the ensemble slots in reverse order."""

    def __init__(self, inner):
        self.inner = inner

    def sample(self, b):
        return self.inner.sample(b)

    def sample_many(self, b, k):
        x, y = self.inner.sample_many(b, k)
        return x[:, ::-1], y[:, ::-1]


def test_ensemble_label_permutation_invariance():
    case = duplicated_gaussian_case(0.0, 1.0)
    dom = case.dom
    flipped = DominatingPair(dom.p_hat, dom.q_hat, dom.m_p, dom.m_q, _Reversed(dom.coupler))
    a = ensemble_rejection_couple(dom, case.p, case.q, 8, bank(21, 50000))
    b = ensemble_rejection_couple(flipped, case.p, case.q, 8, bank(22, 50000))
    assert stats.ks_2samp(a.x.ravel(), b.x.ravel()).pvalue > ALPHA
    assert abs(a.met_rate - b.met_rate) <= 3 * math.sqrt(2) * mc_se(a.met_rate, 50000)


def test_ensemble_state_invariants():
    case = duplicated_gaussian_case(0.0, 1.0)
    for s in range(20):
        st = ensemble_state(case.dom, case.p, case.q, 16, RngStream(s))
        assert st.z_bar_x >= st.z_hat_x and st.z_bar_y >= st.z_hat_y
        assert 0 < st.accept_ratio_x <= 1 and 0 < st.accept_ratio_y <= 1
        i, j = st.chosen
        assert st.z_bar_x == pytest.approx(st.z_hat_x + (case.dom.m_p - st.wx[i]) / 16)


# --- ensemble size rule -------------------------------------------------------


@pytest.mark.parametrize("u,alpha,expected", [(0.0, 0.5, 1), (1.0, 0.5, 2), (2.0, 0.8, 128)])
def test_ensemble_size_rule(u, alpha, expected):
    assert ensemble_size_rule(u, alpha) == expected


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_ensemble_size_rule_bad_alpha(alpha):
    with pytest.raises(InvalidAlpha):
        ensemble_size_rule(1.0, alpha)


# --- diagnostics --------------------------------------------------------------


def test_diagnostics_identical_targets():
    p = normal(0, 1)
    dom = duplicated_proposal(p, 1.0, 1.0)
    diag = estimate_diagnostics(dom, p, p, 8, 2000, RngStream(1), overlap=1.0)
    assert diag.u_stat == 0.0
    assert diag.lower_bound_lN == pytest.approx(1.0)
    assert diag.met_rate == 1.0


def test_diagnostics_px_matches_inverse_bound():
    p, q = normal(0, 1), normal(0.5, 1)
    gamma = normal(0.25, 4.0)
    m_p = normal_scale_bound(0.0, 1.0, 0.25, 4.0)
    m_q = normal_scale_bound(0.5, 1.0, 0.25, 4.0)
    dom = maximal_dominating_pair(gamma, gamma, m_p, m_q)
    diag = estimate_diagnostics(dom, p, q, 8, 50000, RngStream(2))
    se = math.sqrt((1 / m_p) * (1 - 1 / m_p) / 50000)
    assert abs(diag.px_hat - 1 / m_p) <= 3 * se
    assert diag.proposal_met_rate == 1.0


def test_diagnostics_bracket_met_rate():
    case = duplicated_gaussian_case(0.0, 1.0)
    diag = estimate_diagnostics(case.dom, case.p, case.q, 64, 20000, RngStream(3), overlap=gaussian_overlap(1.0))
    slack = 3 * diag.met_se
    assert diag.lower_bound_lN - slack <= diag.met_rate <= diag.upper_bound_uN + slack
    assert diag.tau_var >= 0 and 0 <= diag.met_rate <= 1


def test_diagnostics_need_coupled_proposals():
    from coupled.densities import Uniform

    p, q = Uniform(0, 1), Uniform(2, 3)
    dom = DominatingPair(p, q, 1.0, 1.0, _Independent(p, q))
    with pytest.raises(NoCoupledProposals):
        estimate_diagnostics(dom, p, q, 4, 1000, RngStream(4), overlap=0.0)


class _Independent:
    def __init__(self, p, q):
        self.p, self.q = p, q

    def sample(self, b):
        return self.p.sample(b), self.q.sample(b)
