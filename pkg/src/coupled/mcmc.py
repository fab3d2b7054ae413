"""Coupled MCMC kernels and a meeting-time harness.

Two kernels are provided: a coupled Gibbs sampler for
``p(x, y) ∝ exp(-(|x|^2 |y|^2 + |x|^2 + |y|^2) / 2)`` whose conditionals are
isotropic Gaussians, and a coupled preconditioned MALA kernel whose proposal
covariance depends on the current state.  States are flat float vectors;
chains count as met only when they are bitwise equal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, log_expit

from .couplings import thorisson_modified
from .densities import GaussianParams, MultivariateNormal
from .errors import NotPositiveDefinite
from .gaussian import gaussian_dominating_pair
from .rejection import ensemble_rejection_couple, rejection_couple
from .rng import RngStream, split_stream

DEFAULT_STEP_CAP = 10**4


@dataclass
class CoupledChainState:
    state_1: np.ndarray
    state_2: np.ndarray
    met: bool = False
    step: int = 0

    @classmethod
    def start(cls, state_1, state_2):
        s1 = np.asarray(state_1, dtype=float).copy()
        s2 = np.asarray(state_2, dtype=float).copy()
        return cls(s1, s2, bool(np.array_equal(s1, s2)), 0)


# --- coupler choices ----------------------------------------------------------


@dataclass(frozen=True)
class Rejection:
    """Coupled (ensemble) rejection sampling with ``n`` proposals per step."""

    n: int = 1

    @property
    def name(self):
        return "rejection"

    @property
    def param(self):
        return self.n


@dataclass(frozen=True)
class Thorisson:
    """Modified Thorisson coupling with tuning constant ``c``."""

    c: float = 0.9

    @property
    def name(self):
        return "thorisson"

    @property
    def param(self):
        return self.c


def couple_gaussians(p: GaussianParams, q: GaussianParams, coupler, rng: RngStream, sigma_hat=None):
    """Draw ``(x, y)`` with ``x ~ p`` and ``y ~ q`` from the chosen coupler."""
    if isinstance(coupler, Thorisson):
        d = thorisson_modified(MultivariateNormal(params=p), MultivariateNormal(params=q), coupler.c, rng)
        return d.x, d.y
    dom = gaussian_dominating_pair(p, q, "opt" if sigma_hat is None else sigma_hat)
    mp, mq = MultivariateNormal(params=p), MultivariateNormal(params=q)
    if coupler.n == 1:
        d = rejection_couple(dom, mp, mq, rng)
    else:
        d = ensemble_rejection_couple(dom, mp, mq, coupler.n, rng)
    return d.x, d.y


# --- Gibbs --------------------------------------------------------------------


@dataclass(frozen=True)
class GibbsTarget:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("block dimension must be at least 1")

    def split(self, state):
        return state[: self.d], state[self.d :]

    def log_density(self, state):
        x, y = self.split(np.asarray(state, dtype=float))
        xx, yy = x @ x, y @ y
        return -0.5 * (xx * yy + xx + yy)


def gibbs_scale(other_block) -> float:
    other = np.asarray(other_block, dtype=float)
    return 1.0 / (1.0 + float(other @ other))


def gibbs_conditional(other_block) -> GaussianParams:
    """Conditional law of one block given the other: ``N(0, I / (1 + |other|^2))``."""
    other = np.atleast_1d(np.asarray(other_block, dtype=float))
    d = other.shape[0]
    return GaussianParams(np.zeros(d), gibbs_scale(other) * np.eye(d))


def isotropic_dominating_sigma(s1: float, s2: float, d: int):
    """``max(s1, s2) I``: the optimal common covariance for two isotropic
    zero-mean Gaussians (it coincides with the largest-eigenvalue choice)."""
    return max(s1, s2) * np.eye(d)


def _gibbs_block(other_1, other_2, coupler, rng, same):
    p = gibbs_conditional(other_1)
    if same:
        x = p.mu + p.chol @ rng.normal(p.dim)
        return x, x.copy()
    q = gibbs_conditional(other_2)
    sigma_hat = isotropic_dominating_sigma(p.sigma[0, 0], q.sigma[0, 0], p.dim)
    return couple_gaussians(p, q, coupler, rng, sigma_hat=sigma_hat)


def coupled_gibbs_step(s: CoupledChainState, target: GibbsTarget, coupler, rng: RngStream) -> CoupledChainState:
    """One systematic-scan sweep (``x`` block, then ``y`` block) of both chains.

    Each block update couples the two chains' conditionals; a met pair keeps
    moving with a single shared draw.
    """
    x1, y1 = target.split(s.state_1)
    x2, y2 = target.split(s.state_2)
    same = s.met
    nx1, nx2 = _gibbs_block(y1, y2, coupler, rng, same or np.array_equal(y1, y2))
    ny1, ny2 = _gibbs_block(nx1, nx2, coupler, rng, same or np.array_equal(nx1, nx2))
    state_1 = np.concatenate([nx1, ny1])
    state_2 = state_1.copy() if same else np.concatenate([nx2, ny2])
    met = same or bool(np.array_equal(state_1, state_2))
    return CoupledChainState(state_1, state_2, met, s.step + 1)


def gibbs_kernel(target: GibbsTarget, coupler):
    def kernel(s, rng):
        return coupled_gibbs_step(s, target, coupler, rng)

    return kernel


def gibbs_initial_law(target: GibbsTarget):
    def draw(rng):
        return rng.normal(2 * target.d)

    return draw


def single_gibbs_chain(target: GibbsTarget, start, steps: int, rng: RngStream):
    """Reference single-chain Gibbs sampler; returns the ``(steps, 2d)`` path."""
    state = np.asarray(start, dtype=float).copy()
    out = np.empty((steps, 2 * target.d))
    for t in range(steps):
        x, y = target.split(state)
        x = math.sqrt(gibbs_scale(y)) * rng.normal(target.d)
        y = math.sqrt(gibbs_scale(x)) * rng.normal(target.d)
        state = np.concatenate([x, y])
        out[t] = state
    return out


# --- preconditioned MALA on logistic regression -------------------------------


@dataclass
class LogisticRegression:
    """Bayesian logistic regression with an isotropic Gaussian prior."""

    design: np.ndarray
    labels: np.ndarray
    prior_var: float = 100.0

    @property
    def dim(self):
        return self.design.shape[1]

    def log_density_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        eta = self.design @ theta
        signs = 2.0 * self.labels - 1.0
        value = float(np.sum(log_expit(signs * eta))) - 0.5 * float(theta @ theta) / self.prior_var
        grad = self.design.T @ (self.labels - expit(eta)) - theta / self.prior_var
        return value, grad

    def fisher_preconditioner(self, theta):
        """Inverse of the expected Fisher information plus the prior precision."""
        pr = expit(self.design @ np.asarray(theta, dtype=float))
        info = (self.design * (pr * (1.0 - pr))[:, None]).T @ self.design + np.eye(self.dim) / self.prior_var
        inv = np.linalg.inv(info)
        return 0.5 * (inv + inv.T)


def synthetic_logistic_regression(dim: int = 5, n_obs: int = 200, seed: int = 20240101) -> LogisticRegression:
    """Synthetic design with an intercept column and fixed true coefficients."""
    rng = np.random.default_rng(seed)
    design = np.column_stack([np.ones(n_obs), rng.normal(size=(n_obs, dim - 1))])
    beta = rng.normal(scale=1.0, size=dim)
    labels = (rng.uniform(size=n_obs) < expit(design @ beta)).astype(float)
    return LogisticRegression(design, labels)


def _mala_proposal(theta, logpdf_and_grad, precond, h):
    value, grad = logpdf_and_grad(theta)
    cov = precond(theta)
    mean = theta + 0.5 * h * cov @ grad
    try:
        params = GaussianParams(mean, h * cov)
    except NotPositiveDefinite:
        raise NotPositiveDefinite("preconditioner is not positive definite") from None
    return value, params


def _log_q(to, params: GaussianParams):
    return float(MultivariateNormal(params=params).log_pdf(to)[0])


def _mh_log_ratio(theta, prop, value, fwd, logpdf_and_grad, precond, h):
    value_prop, rev = _mala_proposal(prop, logpdf_and_grad, precond, h)
    return value_prop - value + _log_q(theta, rev) - _log_q(prop, fwd)


def coupled_mala_step(
    s: CoupledChainState,
    target_logpdf_and_grad: Callable,
    precond: Callable,
    step_size: float,
    n: int,
    rng: RngStream,
) -> CoupledChainState:
    """Coupled preconditioned MALA transition.

    Proposals ``N(theta + h/2 P(theta) grad, h P(theta))`` of the two chains
    are coupled by ensemble rejection sampling with the optimal dominating
    covariance, then one shared uniform drives both Metropolis-Hastings tests.
    """
    if not step_size > 0:
        raise ValueError("step size must be positive")
    t1, t2 = s.state_1, s.state_2
    v1, f1 = _mala_proposal(t1, target_logpdf_and_grad, precond, step_size)
    if s.met:
        prop = f1.mu + f1.chol @ rng.normal(f1.dim)
        log_u = math.log(rng.uniform())
        if log_u < _mh_log_ratio(t1, prop, v1, f1, target_logpdf_and_grad, precond, step_size):
            t1 = prop
        return CoupledChainState(t1, t1.copy(), True, s.step + 1)
    v2, f2 = _mala_proposal(t2, target_logpdf_and_grad, precond, step_size)
    p1, p2 = couple_gaussians(f1, f2, Rejection(n), rng)
    log_u = math.log(rng.uniform())
    if log_u < _mh_log_ratio(t1, p1, v1, f1, target_logpdf_and_grad, precond, step_size):
        t1 = p1
    if log_u < _mh_log_ratio(t2, p2, v2, f2, target_logpdf_and_grad, precond, step_size):
        t2 = p2
    return CoupledChainState(t1, t2, bool(np.array_equal(t1, t2)), s.step + 1)


def mala_kernel(model: LogisticRegression, step_size: float, n: int):
    def kernel(s, rng):
        return coupled_mala_step(s, model.log_density_and_grad, model.fisher_preconditioner, step_size, n, rng)

    return kernel


def posterior_mode(model: LogisticRegression, iters: int = 50, tol: float = 1e-12):
    """Newton iterations for the posterior mode (the Fisher information is
    the exact negative Hessian for the logistic link)."""
    theta = np.zeros(model.dim)
    for _ in range(iters):
        _, grad = model.log_density_and_grad(theta)
        step = model.fisher_preconditioner(theta) @ grad
        theta = theta + step
        if np.max(np.abs(step)) < tol:
            break
    return theta


def mala_initial_law(model: LogisticRegression):
    """Laplace approximation ``N(mode, P(mode))`` of the posterior."""
    mode = posterior_mode(model)
    chol = np.linalg.cholesky(model.fisher_preconditioner(mode))

    def draw(rng):
        return mode + chol @ rng.normal(model.dim)

    return draw


# --- meeting times ------------------------------------------------------------


@dataclass
class MeetingTimeSummary:
    times: np.ndarray
    censored: np.ndarray
    wall_seconds: np.ndarray
    cap: int

    @property
    def uncensored(self):
        return self.times[~self.censored]

    @property
    def n_censored(self):
        return int(np.sum(self.censored))

    @property
    def censoring_rate(self):
        return float(np.mean(self.censored))

    @property
    def mean(self):
        t = self.uncensored
        return float(np.mean(t)) if t.size else math.nan

    @property
    def std(self):
        t = self.uncensored
        return float(np.std(t, ddof=1)) if t.size > 1 else math.nan

    @property
    def standard_error(self):
        t = self.uncensored
        return self.std / math.sqrt(t.size) if t.size > 1 else math.nan

    @property
    def quantiles(self):
        t = self.uncensored
        if not t.size:
            return {0.05: math.nan, 0.5: math.nan, 0.95: math.nan}
        q = np.quantile(t, [0.05, 0.5, 0.95])
        return {0.05: float(q[0]), 0.5: float(q[1]), 0.95: float(q[2])}


def run_until_met(kernel, state: CoupledChainState, cap: int, rng: RngStream):
    while not state.met and state.step < cap:
        state = kernel(state, rng)
    return state


def measure_meeting_times(kernel, initial_law, runs: int, cap: int, rng: RngStream) -> MeetingTimeSummary:
    """Run ``runs`` independent coupled chains until they meet or hit ``cap``.

    Run ``r`` uses ``split_stream(rng, r)``: both chains start from independent
    draws of ``initial_law`` and the recorded time is the first step at which
    they are equal.  Runs that never meet are censored at ``cap``.
    """
    if runs < 1 or cap < 1:
        raise ValueError("runs and cap must be at least 1")
    times = np.empty(runs, dtype=np.int64)
    censored = np.zeros(runs, dtype=bool)
    wall = np.empty(runs)
    for r in range(runs):
        lane = split_stream(rng, r)
        start = time.perf_counter()
        s0 = CoupledChainState(initial_law(lane), initial_law(lane))
        end = run_until_met(kernel, s0, cap, lane)
        wall[r] = time.perf_counter() - start
        times[r] = end.step
        censored[r] = not end.met
    return MeetingTimeSummary(times, censored, wall, cap)

