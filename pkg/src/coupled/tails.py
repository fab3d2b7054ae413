"""Coupled sampling of standard-normal tails ``X | X > mu`` and ``Y | Y > eta``.

Proposals are translated exponentials ``Exp(m, alpha(m))``; their maximal
coupling is sampled exactly through closed-form inverse CDFs on the overlap
branches and Chandrupatla root finding on the two residual densities.
The closed-form masses are written with ``expm1``/``log1p`` so they stay
accurate as ``eta`` approaches ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from .couplings import CoupledDraws, run_batched
from .densities import LOG_2PI, TranslatedExponential, TruncatedNormalTail, as_points, robert_rate
from .errors import DegenerateGap, DomainError
from .numeric import MAX_ITER, TOL_F, TOL_X, chandrupatla
from .rejection import DominatingPair, DuplicatedProposal, ensemble_rejection_couple, rejection_couple

TAIL_SPAN = 50.0


def optimal_rate(z):
    """Optimal exponential rate ``(z + sqrt(z^2 + 4)) / 2`` for the tail above ``z``."""
    return robert_rate(z)


def tail_acceptance_ratio(x, m):
    """``p(x) / (M p_hat(x)) = exp(-(x - alpha(m))^2 / 2)`` for ``x >= m``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < m):
        raise DomainError(f"tail acceptance ratio needs x >= {m}")
    out = np.exp(-0.5 * (x - optimal_rate(m)) ** 2)
    return out if out.ndim else float(out)


def tail_log_bound(m) -> float:
    """``log M`` for the truncated normal above ``m`` under ``Exp(m, alpha(m))``."""
    a = optimal_rate(m)
    return 0.5 * a * a - a * m - 0.5 * LOG_2PI - math.log(a) - float(log_ndtr(-m))


@dataclass(frozen=True)
class TailCouplingTables:
    mu: float
    eta: float
    rate_mu: float
    rate_eta: float
    gamma_cross: float
    zc: float
    zc1: float
    zc2: float
    zp: float
    zp1: float
    zp2: float
    zq: float

    @property
    def rate_gap(self):
        return self.rate_eta - self.rate_mu

    # inverse CDFs of the overlap branches and of the closed-form residual branch

    def c1_inv(self, u):
        a, gap = self.rate_mu, self.eta - self.mu
        return self.mu - np.log(np.exp(-a * gap) - u * self.zc1) / a

    def c2_inv(self, u):
        return self.gamma_cross - np.log1p(-np.asarray(u, dtype=float)) / self.rate_eta

    def p2_inv(self, u):
        return self.mu - np.log1p(-np.asarray(u, dtype=float) * self.zp2) / self.rate_mu

    # branch CDFs (used for root finding and round-trip checks)

    def c1_cdf(self, x):
        a = self.rate_mu
        return np.exp(-a * (self.eta - self.mu)) * -np.expm1(-a * (np.asarray(x) - self.eta)) / self.zc1

    def c2_cdf(self, x):
        return -np.expm1(-self.rate_eta * (np.asarray(x) - self.gamma_cross))

    def p2_cdf(self, x):
        return -np.expm1(-self.rate_mu * (np.asarray(x) - self.mu)) / self.zp2

    def _p1_survival(self, x):
        # exp(-a(x-mu)) - exp(-b(x-eta)) for x >= gamma, without cancellation
        a = self.rate_mu
        g = self.rate_gap * (x - self.gamma_cross) + math.log1p(self.rate_gap / a)
        return np.exp(-a * (x - self.mu)) * -np.expm1(-g)

    def p1_cdf(self, x):
        return 1.0 - self._p1_survival(np.asarray(x, dtype=float)) / self.zp1

    def q_cdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.rate_mu, self.rate_eta
        head = -np.expm1(-b * (x - self.eta))
        overlap = math.exp(-a * (self.eta - self.mu)) * -np.expm1(-a * (x - self.eta))
        return (head - overlap) / self.zq

    def p1_bracket(self):
        return self.gamma_cross, self.gamma_cross + TAIL_SPAN / self.rate_mu

    def p1_inv(self, u):
        lo, hi = self.p1_bracket()
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return chandrupatla(lambda x: self.p1_cdf(x) - u, lo, hi, f_lo=-u, f_hi=self.p1_cdf(hi) - u,
                            tol_x=TOL_X, tol_f=TOL_F, max_iter=MAX_ITER)

    def q_inv(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return chandrupatla(lambda x: self.q_cdf(x) - u, self.eta, self.gamma_cross, f_lo=-u, f_hi=1.0 - u,
                            tol_x=TOL_X, tol_f=TOL_F, max_iter=MAX_ITER)


def build_tail_tables(mu: float, eta: float) -> TailCouplingTables:
    """Crossing point and branch masses of the maximal coupling of
    ``Exp(mu, alpha(mu))`` and ``Exp(eta, alpha(eta))`` (requires ``eta > mu``)."""
    mu, eta = float(mu), float(eta)
    if not eta > mu:
        raise DegenerateGap(f"need eta > mu, got mu={mu}, eta={eta}")
    a, b = optimal_rate(mu), optimal_rate(eta)
    gap = eta - mu
    # alpha(eta) - alpha(mu) without subtracting nearly equal numbers
    rate_gap = 0.5 * gap * (1.0 + (eta + mu) / (math.sqrt(eta * eta + 4.0) + math.sqrt(mu * mu + 4.0)))
    # gamma - eta = (log(b/a) + a (eta - mu)) / (b - a)
    gamma = eta + (math.log1p(rate_gap / a) + a * gap) / rate_gap

    e_a_eta = math.exp(-a * gap)
    e_a_gamma = math.exp(-a * (gamma - mu))
    e_b_gamma = math.exp(-b * (gamma - eta))
    zc1 = e_a_eta * -math.expm1(-a * (gamma - eta))
    zc2 = e_b_gamma
    zc = e_a_eta - e_a_gamma + e_b_gamma
    zp1 = e_a_gamma * (rate_gap / b)
    zp2 = -math.expm1(-a * gap)
    zp = 1.0 - e_a_eta + e_a_gamma - e_b_gamma
    zq = -math.expm1(-b * (gamma - eta)) - zc1
    return TailCouplingTables(mu, eta, a, b, gamma, zc, zc1, zc2, zp, zp1, zp2, zq)


def _max_coupled_exponentials(t: TailCouplingTables, bank):
    n = len(bank)
    u = bank.uniform(4)
    met = u[:, 0] < t.zc
    x = np.empty(n)
    y = np.empty(n)

    first = u[:, 1] * t.zc < t.zc1
    m1 = met & first
    m2 = met & ~first
    x[m1] = t.c1_inv(u[m1, 2])
    x[m2] = t.c2_inv(u[m2, 2])
    y[met] = x[met]

    res = ~met
    p_first = u[:, 1] * t.zp < t.zp1
    r1 = res & p_first
    r2 = res & ~p_first
    if r1.any():
        x[r1] = t.p1_inv(u[r1, 2])
    x[r2] = t.p2_inv(u[r2, 2])
    if res.any():
        y[res] = t.q_inv(u[res, 3])
    return CoupledDraws.build(x[:, None], y[:, None], np.ones(n))


def sample_max_coupled_exponentials(t: TailCouplingTables, rng):
    """Exact maximal coupling of ``Exp(mu, alpha(mu))`` and ``Exp(eta, alpha(eta))``.

    Consumes four uniforms per draw: the overlap test, the branch choice,
    the inverse-CDF uniform for ``x`` and the one for the residual ``y``.
    """
    return run_batched(_max_coupled_exponentials, rng, t)


class _ExponentialCoupler:
    def __init__(self, tables):
        self.tables = tables

    def sample(self, bank):
        d = _max_coupled_exponentials(self.tables, bank)
        return d.x, d.y


def _tail_ratio(m):
    a = optimal_rate(m)

    def log_ratio(x):
        return -0.5 * (as_points(x, 1)[:, 0] - a) ** 2

    return log_ratio


def tail_dominating_pair(mu: float, eta: float) -> DominatingPair:
    """Translated-exponential dominating pair for the tails above ``mu`` and ``eta``
    (``eta >= mu``).  Equal truncations share one duplicated proposal."""
    p_hat = TranslatedExponential(mu, optimal_rate(mu))
    m_p = math.exp(tail_log_bound(mu))
    ratios = dict(log_ratio_p=_tail_ratio(mu), log_ratio_q=_tail_ratio(eta))
    if eta == mu:
        return DominatingPair(p_hat, p_hat, m_p, m_p, DuplicatedProposal(p_hat), **ratios)
    q_hat = TranslatedExponential(eta, optimal_rate(eta))
    coupler = _ExponentialCoupler(build_tail_tables(mu, eta))
    return DominatingPair(p_hat, q_hat, m_p, math.exp(tail_log_bound(eta)), coupler, **ratios)


def _tail_sampler(mu, eta, n, bank):
    swap = eta < mu
    lo, hi = (eta, mu) if swap else (mu, eta)
    dom = tail_dominating_pair(lo, hi)
    p, q = TruncatedNormalTail(lo), TruncatedNormalTail(hi)
    if n == 1:
        out = rejection_couple(dom, p, q, bank)
    else:
        out = ensemble_rejection_couple(dom, p, q, n, bank)
    if swap:
        out = CoupledDraws(out.y, out.x, out.met, out.steps)
    return out


def coupled_tail_sampler(mu: float, eta: float, n: int, rng):
    """Diagonal coupling of the standard-normal tails above ``mu`` and ``eta``.

    ``n = 1`` runs the plain coupled rejection sampler, larger ``n`` the
    ensemble version.  Inputs in either order are accepted; the pair is
    returned in the caller's order.
    """
    if mu < 0 or eta < 0:
        raise DomainError("truncation points must be nonnegative")
    if n < 1:
        raise ValueError("n must be at least 1")
    return run_batched(_tail_sampler, rng, float(mu), float(eta), int(n))


def tail_overlap(mu: float, eta: float) -> float:
    """``int min(p_mu, q_eta)`` by adaptive quadrature of the minimum of the
    two truncated-normal log-densities."""
    lo, hi = min(mu, eta), max(mu, eta)
    if lo == hi:
        return 1.0
    log_mass_lo, log_mass_hi = float(log_ndtr(-lo)), float(log_ndtr(-hi))

    def integrand(x):
        base = -0.5 * x * x - 0.5 * LOG_2PI
        return math.exp(min(base - log_mass_lo, base - log_mass_hi))

    # rescale around the lower end of the common support for accuracy
    scale = 1.0 / optimal_rate(hi)
    value, _ = integrate.quad(integrand, hi, hi + 60.0 * scale, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(value)


def exponential_overlap(mu: float, eta: float) -> float:
    """``int min(p_hat, q_hat)`` of the two exponential proposals by quadrature."""
    lo, hi = min(mu, eta), max(mu, eta)
    p_hat = TranslatedExponential(lo, optimal_rate(lo))
    q_hat = TranslatedExponential(hi, optimal_rate(hi))

    def integrand(x):
        return math.exp(min(p_hat.log_pdf(x)[0], q_hat.log_pdf(x)[0]))

    if lo == hi:
        return 1.0
    t = build_tail_tables(lo, hi)
    pieces = [(hi, t.gamma_cross), (t.gamma_cross, t.gamma_cross + TAIL_SPAN / t.rate_mu)]
    return float(sum(integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0] for a, b in pieces))
