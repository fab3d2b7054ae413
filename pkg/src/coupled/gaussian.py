"""Coupling Gaussians with different means and covariances.

The dominating pair is a reflection-maximal coupling of ``N(mu_p, S)`` and
``N(mu_q, S)`` where the common covariance ``S`` satisfies
``S^{-1} <= Sigma_p^{-1}`` and ``S^{-1} <= Sigma_q^{-1}`` (Loewner order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .couplings import ReflectionCoupling
from .densities import GaussianParams, MultivariateNormal, as_points, cholesky_lower
from .errors import DominationViolated, EigDecompositionFailed, NotPositiveDefinite, SingularH
from .numeric import std_normal_cdf
from .rejection import DominatingPair

LOEWNER_TOL = 1e-9


def _params(g):
    return g if isinstance(g, GaussianParams) else GaussianParams(g[0], g[1])


def _spd(sigma):
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    chol = cholesky_lower(sigma)
    return sigma, chol


def _inverse(chol):
    inv = cho_solve((chol, True), np.eye(chol.shape[0]))
    return 0.5 * (inv + inv.T)


def _sym(a):
    return 0.5 * (a + a.T)


def sigma_max(sp, sq):
    """``lambda_max I`` with ``lambda_max`` the largest eigenvalue of either matrix."""
    sp, _ = _spd(sp)
    sq, _ = _spd(sq)
    if sp.shape != sq.shape:
        raise ValueError("covariances must have the same shape")
    lam = max(np.linalg.eigvalsh(_sym(sp))[-1], np.linalg.eigvalsh(_sym(sq))[-1])
    return lam * np.eye(sp.shape[0])


def sigma_opt(sp, sq):
    """Covariance maximizing ``log det S^{-1}`` under both Loewner constraints.

    With ``C`` the lower Cholesky factor of ``sq`` and ``V D V^T`` the
    eigendecomposition of ``C^T sp^{-1} C``, the optimum is
    ``C V diag(1 / min(1, D)) V^T C^T``.
    """
    sp, lp = _spd(sp)
    sq, c = _spd(sq)
    if sp.shape != sq.shape:
        raise ValueError("covariances must have the same shape")
    y = _sym(c.T @ cho_solve((lp, True), c))
    try:
        d, v = np.linalg.eigh(y)
    except np.linalg.LinAlgError as exc:
        raise EigDecompositionFailed(str(exc)) from None
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise NotPositiveDefinite("transformed precision has nonpositive eigenvalues")
    cv = c @ v
    return _sym((cv / np.minimum(1.0, d)) @ cv.T)


def loewner_margin(sigma_target, sigma_hat):
    """Smallest eigenvalue of ``sigma_target^{-1} - sigma_hat^{-1}`` relative to
    the largest absolute eigenvalue of the two precisions."""
    _, lt = _spd(sigma_target)
    _, lh = _spd(sigma_hat)
    pt, ph = _inverse(lt), _inverse(lh)
    scale = max(np.abs(np.linalg.eigvalsh(pt)).max(), np.abs(np.linalg.eigvalsh(ph)).max())
    return float(np.linalg.eigvalsh(_sym(pt - ph))[0] / scale)


def check_loewner(sigma_target, sigma_hat, tol=LOEWNER_TOL):
    margin = loewner_margin(sigma_target, sigma_hat)
    if margin < -tol:
        raise DominationViolated(f"dominating covariance is not wide enough (relative eigenvalue {margin:.3e})")
    return margin


def gaussian_m_constant(target, dominating_sigma) -> float:
    """``M = (det S / det Sigma_target)^{1/2}`` computed from Cholesky diagonals."""
    target = _params(target)
    check_loewner(target.sigma, dominating_sigma)
    _, lh = _spd(dominating_sigma)
    log_det_hat = 2.0 * np.sum(np.log(np.diag(lh)))
    return math.exp(0.5 * (log_det_hat - target.log_det))


@dataclass
class GaussianBounds:
    lower: float
    upper: float
    h: np.ndarray
    alpha_vec: np.ndarray
    beta: float
    delta_vec: np.ndarray
    gamma: float


def reflection_overlap(mu_p, mu_q, sigma) -> float:
    """``2 F(-||L^{-1}(mu_p - mu_q)|| / 2)``: success of the reflection coupling."""
    _, chol = _spd(sigma)
    z = solve_triangular(chol, np.asarray(mu_p, float) - np.asarray(mu_q, float), lower=True)
    return float(2.0 * std_normal_cdf(-0.5 * np.linalg.norm(z)))


def gaussian_coupling_bounds(p, q, sigma_hat) -> GaussianBounds:
    """Lower and upper bounds on the coupling probability of the Gaussian
    rejection coupler using dominating covariance ``sigma_hat``.

    When the means coincide the normal-CDF argument is ``0/0``; the lower
    bound then uses its symmetric limit ``F = 1/2``.
    """
    p, q = _params(p), _params(q)
    sigma_hat, lh = _spd(sigma_hat)
    pp, pq, ph = p.precision(), q.precision(), _inverse(lh)
    mp, mq = p.mu, q.mu
    h_inv = _sym(pp + pq - ph)
    try:
        lv = np.linalg.cholesky(h_inv)
    except np.linalg.LinAlgError:
        raise SingularH("Sigma_p^-1 + Sigma_q^-1 - S^-1 is not invertible") from None
    h = _inverse(lv)
    alpha = h @ (pp @ mp + (pq - ph) @ mq)
    delta = h @ (pq @ mq + (pp - ph) @ mp)
    beta = float(mp @ pp @ mp + mq @ (pq - ph) @ mq - alpha @ h_inv @ alpha)
    gamma = float(mq @ pq @ mq + mp @ (pp - ph) @ mp - delta @ h_inv @ delta)

    gap = mp - mq
    ph_gap = ph @ gap
    lh_h = np.linalg.cholesky(h)
    denom = float(np.linalg.norm(lh_h.T @ ph_gap))
    base = float(mp @ ph @ mp - mq @ ph @ mq)

    def big_f(u):
        if denom == 0.0:
            return 0.5
        return float(std_normal_cdf(0.5 * (base - 2.0 * u @ ph_gap) / denom))

    log_det_h = 2.0 * np.sum(np.log(np.diag(lh_h)))
    log_det_hat = 2.0 * np.sum(np.log(np.diag(lh)))
    ratio = math.exp(0.5 * (log_det_h - log_det_hat))
    lower = ratio * (math.exp(-beta / 2.0) * big_f(alpha) + math.exp(-gamma / 2.0) * (1.0 - big_f(delta)))
    upper = reflection_overlap(mp, mq, sigma_hat)
    return GaussianBounds(lower, upper, h, alpha, beta, delta, gamma)


def _quadratic_log_ratio(mu, precision_gap):
    def log_ratio(x):
        r = as_points(x, mu.shape[0]) - mu
        return -0.5 * np.einsum("ni,ij,nj->n", r, precision_gap, r)

    return log_ratio


def gaussian_dominating_pair(p, q, strategy="opt") -> DominatingPair:
    """Dominating pair for ``N(mu_p, Sigma_p)`` and ``N(mu_q, Sigma_q)``.

    ``strategy`` is ``"opt"``, ``"max"`` or an explicit covariance matrix.
    The acceptance ratios are evaluated in closed form as
    ``exp(-(x - mu)^T (Sigma^{-1} - S^{-1}) (x - mu) / 2)``.
    """
    p, q = _params(p), _params(q)
    if isinstance(strategy, str):
        if strategy == "opt":
            sigma_hat = sigma_opt(p.sigma, q.sigma)
        elif strategy == "max":
            sigma_hat = sigma_max(p.sigma, q.sigma)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
    else:
        sigma_hat = np.atleast_2d(np.asarray(strategy, dtype=float))
    m_p = gaussian_m_constant(p, sigma_hat)
    m_q = gaussian_m_constant(q, sigma_hat)
    hat = GaussianParams(np.zeros(p.dim), sigma_hat)
    ph = hat.precision()
    coupler = ReflectionCoupling(p.mu, q.mu, chol=hat.chol)
    dom = DominatingPair(
        MultivariateNormal(params=GaussianParams(p.mu, sigma_hat)),
        MultivariateNormal(params=GaussianParams(q.mu, sigma_hat)),
        max(m_p, 1.0),
        max(m_q, 1.0),
        coupler,
        log_ratio_p=_quadratic_log_ratio(p.mu, _sym(p.precision() - ph)),
        log_ratio_q=_quadratic_log_ratio(q.mu, _sym(q.precision() - ph)),
    )
    dom.sigma_hat = sigma_hat
    return dom
