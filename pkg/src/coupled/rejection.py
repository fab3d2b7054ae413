"""Coupled rejection sampling and its ensemble variant.

Both engines draw coupled proposals from a :class:`DominatingPair` and gate
the two margins with one shared uniform per iteration.  The loop stops as
soon as either margin accepts; a margin that did not accept is then drawn
from its own target sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .couplings import CoupledDraws, _maximal_generic, categorical_coupling_rows, run_batched
from .densities import Density, as_points
from .errors import DominationViolated, InvalidAlpha, MaxIterExceeded, NoCoupledProposals
from .numeric import pairwise_sum
from .rng import RngStream, StreamBank, single_lane, split_stream

DEFAULT_CAP = 10**6
DOMINATION_RTOL = 1e-9
_LOG_TOL = math.log1p(DOMINATION_RTOL)


class DuplicatedProposal:
    """Coupler drawing ``x ~ gamma`` and returning ``(x, x)``."""

    def __init__(self, gamma: Density):
        self.gamma = gamma

    def sample(self, bank):
        x = as_points(self.gamma.sample(bank), self.gamma.dim)
        return x, x.copy()

    def sample_many(self, bank, k):
        x = self.gamma.sample_many(bank, k)
        return x, x.copy()


class GenericMaximalProposal:
    """Coupler drawing from the two-branch maximal coupling of ``(p_hat, q_hat)``."""

    def __init__(self, p_hat: Density, q_hat: Density, cap: int = DEFAULT_CAP):
        self.p_hat, self.q_hat, self.cap = p_hat, q_hat, cap

    def sample(self, bank):
        draws = _maximal_generic(self.p_hat, self.q_hat, bank, cap=self.cap)
        return draws.x, draws.y


@dataclass
class DominatingPair:
    """Proposal densities with ratio bounds and a coupled proposal sampler.

    ``coupler.sample(bank)`` returns the proposal pair ``(x_hat, y_hat)`` with
    one row per lane; an optional ``coupler.sample_many(bank, k)`` returns
    ``(lanes, k, dim)`` arrays.  ``log_ratio_p`` / ``log_ratio_q`` may supply
    the normalized log acceptance ratio ``log p - log m_p - log p_hat`` in
    closed form; otherwise it is computed from the densities.
    """

    p_hat: Density
    q_hat: Density
    m_p: float
    m_q: float
    coupler: object
    log_ratio_p: Callable | None = None
    log_ratio_q: Callable | None = None

    def __post_init__(self):
        if not (self.m_p >= 1.0 - 1e-12 and self.m_q >= 1.0 - 1e-12):
            raise DominationViolated(f"bounds must be >= 1, got m_p={self.m_p}, m_q={self.m_q}")
        self.log_m_p = math.log(self.m_p)
        self.log_m_q = math.log(self.m_q)

    def sample_coupled(self, rng):
        """Proposal pair and its ``met`` flag (arrays for a bank)."""
        if isinstance(rng, StreamBank):
            x, y = self.coupler.sample(rng)
            return x, y, np.all(x == y, axis=1)
        with single_lane(rng) as bank:
            x, y = self.coupler.sample(bank)
        return x[0], y[0], bool(np.all(x[0] == y[0]))

    def sample_many(self, bank, k):
        if hasattr(self.coupler, "sample_many"):
            return self.coupler.sample_many(bank, k)
        pairs = [self.coupler.sample(bank) for _ in range(k)]
        return np.stack([a for a, _ in pairs], axis=1), np.stack([b for _, b in pairs], axis=1)

    def log_accept_p(self, p: Density, x):
        if self.log_ratio_p is not None:
            return _checked(self.log_ratio_p(x), "p")
        return _checked(p.log_pdf(x) - self.log_m_p - self.p_hat.log_pdf(x), "p")

    def log_accept_q(self, q: Density, y):
        if self.log_ratio_q is not None:
            return _checked(self.log_ratio_q(y), "q")
        return _checked(q.log_pdf(y) - self.log_m_q - self.q_hat.log_pdf(y), "q")


def _checked(log_r, which):
    log_r = np.asarray(log_r, dtype=float)
    if np.any(log_r > _LOG_TOL) or np.any(np.isnan(log_r)):
        worst = float(np.nanmax(log_r)) if np.any(~np.isnan(log_r)) else float("nan")
        raise DominationViolated(f"{which}-ratio exceeds its bound: log ratio {worst:.3e}")
    return np.minimum(log_r, 0.0)


def duplicated_proposal(gamma: Density, m_p: float, m_q: float, **ratios) -> DominatingPair:
    """Dominating pair with one common proposal ``gamma`` and ``y_hat = x_hat``."""
    return DominatingPair(gamma, gamma, m_p, m_q, DuplicatedProposal(gamma), **ratios)


def maximal_dominating_pair(p_hat: Density, q_hat: Density, m_p: float, m_q: float, **ratios) -> DominatingPair:
    """Dominating pair coupled by the generic maximal coupling."""
    return DominatingPair(p_hat, q_hat, m_p, m_q, GenericMaximalProposal(p_hat, q_hat), **ratios)


def check_domination(dom: DominatingPair, p: Density, q: Density, rng, n_points: int = 10**4):
    """Spot-check ``p <= m_p p_hat`` and ``q <= m_q q_hat`` on points drawn from
    the proposals and from the targets; raises :class:`DominationViolated`."""
    bank = StreamBank.split(rng, n_points) if isinstance(rng, RngStream) else rng
    for target, proposal, check in ((p, dom.p_hat, dom.log_accept_p), (q, dom.q_hat, dom.log_accept_q)):
        pts = np.concatenate([as_points(proposal.sample(bank), proposal.dim), as_points(target.sample(bank), target.dim)])
        check(target, pts)


# --- engines ------------------------------------------------------------------


def _finish(p, q, bank, x, y, ax, ay, steps):
    nx = np.flatnonzero(~ax)
    if nx.size:
        x[nx] = as_points(p.sample(bank[nx]), p.dim)
    ny = np.flatnonzero(~ay)
    if ny.size:
        y[ny] = as_points(q.sample(bank[ny]), q.dim)
    return CoupledDraws.build(x, y, steps)


def _rejection(dom: DominatingPair, p: Density, q: Density, bank, cap=DEFAULT_CAP):
    n = len(bank)
    x = np.empty((n, p.dim))
    y = np.empty((n, q.dim))
    ax = np.zeros(n, dtype=bool)
    ay = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    for _ in range(cap):
        if active.size == 0:
            return _finish(p, q, bank, x, y, ax, ay, steps)
        sub = bank[active]
        xh, yh = dom.coupler.sample(sub)
        log_u = np.log(sub.uniform())
        steps[active] += 1
        acc_x = log_u < dom.log_accept_p(p, xh)
        acc_y = log_u < dom.log_accept_q(q, yh)
        x[active[acc_x]] = xh[acc_x]
        y[active[acc_y]] = yh[acc_y]
        ax[active[acc_x]] = True
        ay[active[acc_y]] = True
        active = active[~(acc_x | acc_y)]
    raise MaxIterExceeded("coupled rejection sampler", cap, pending_lanes=int(active.size))


def rejection_couple(dom: DominatingPair, p: Density, q: Density, rng, cap: int = DEFAULT_CAP):
    """Coupled rejection sampling of ``(p, q)`` from the dominating pair ``dom``.

    Each iteration draws ``(x_hat, y_hat)`` and one uniform ``u``; ``x_hat`` is
    accepted if ``u < p/(m_p p_hat)`` and ``y_hat`` if ``u < q/(m_q q_hat)``.
    ``steps`` is the number of proposal pairs drawn.
    """
    return run_batched(_rejection, rng, dom, p, q, cap=cap)


@dataclass
class EnsembleState:
    """One iteration of the ensemble sampler for a single lane (weights are the
    unnormalized importance weights ``p/p_hat`` and ``q/q_hat``)."""

    x_hat: np.ndarray
    y_hat: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    z_hat_x: float
    z_hat_y: float
    z_bar_x: float
    z_bar_y: float
    chosen: tuple

    @property
    def accept_ratio_x(self):
        return self.z_hat_x / self.z_bar_x

    @property
    def accept_ratio_y(self):
        return self.z_hat_y / self.z_bar_y


def _ensemble_round(dom, p, q, n, sub):
    """Draw ``n`` proposals per lane, the shared uniform and the index pair."""
    xh, yh = dom.sample_many(sub, n)
    lanes = xh.shape[0]
    u = sub.uniform()
    rx = np.exp(dom.log_accept_p(p, xh.reshape(-1, p.dim))).reshape(lanes, n)
    ry = np.exp(dom.log_accept_q(q, yh.reshape(-1, q.dim))).reshape(lanes, n)
    i, j = categorical_coupling_rows(rx, ry, sub)
    rows = np.arange(lanes)
    return xh, yh, u, rx, ry, i, j, rows


def _ensemble(dom, p, q, n, bank, cap=DEFAULT_CAP):
    size = len(bank)
    x = np.empty((size, p.dim))
    y = np.empty((size, q.dim))
    ax = np.zeros(size, dtype=bool)
    ay = np.zeros(size, dtype=bool)
    steps = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    for _ in range(cap):
        if active.size == 0:
            return _finish(p, q, bank, x, y, ax, ay, steps)
        sub = bank[active]
        xh, yh, u, rx, ry, i, j, rows = _ensemble_round(dom, p, q, n, sub)
        steps[active] += 1
        # with r = w / m:  Z_hat / Z_bar = sum r / (sum r + 1 - r_I)
        sx = pairwise_sum(rx, axis=1)
        sy = pairwise_sum(ry, axis=1)
        acc_x = u * (sx + 1.0 - rx[rows, i]) < sx
        acc_y = u * (sy + 1.0 - ry[rows, j]) < sy
        x[active[acc_x]] = xh[rows, i][acc_x]
        y[active[acc_y]] = yh[rows, j][acc_y]
        ax[active[acc_x]] = True
        ay[active[acc_y]] = True
        active = active[~(acc_x | acc_y)]
    raise MaxIterExceeded("ensemble coupled rejection sampler", cap, pending_lanes=int(active.size))


def ensemble_rejection_couple(dom: DominatingPair, p: Density, q: Density, n: int, rng, cap: int = DEFAULT_CAP):
    """Ensemble coupled rejection sampling with ``n`` proposal pairs per step.

    The index pair ``(I, J)`` comes from the maximal coupling of the two
    self-normalized weight vectors and a shared uniform ``u`` tests
    ``u < Z_hat / Z_bar`` for each margin.  ``steps`` counts ensemble draws.
    """
    if n < 1:
        raise ValueError("ensemble size must be at least 1")
    return run_batched(_ensemble, rng, dom, p, q, int(n), cap=cap)


def ensemble_state(dom: DominatingPair, p: Density, q: Density, n: int, rng: RngStream) -> EnsembleState:
    """Build the ensemble quantities of one iteration (single lane)."""
    with single_lane(rng) as bank:
        xh, yh, _, rx, ry, i, j, _ = _ensemble_round(dom, p, q, n, bank)
    wx, wy = dom.m_p * rx[0], dom.m_q * ry[0]
    zx = float(pairwise_sum(wx)) / n
    zy = float(pairwise_sum(wy)) / n
    i, j = int(i[0]), int(j[0])
    return EnsembleState(
        xh[0], yh[0], wx, wy, zx, zy,
        zx + (dom.m_p - wx[i]) / n, zy + (dom.m_q - wy[j]) / n, (i, j),
    )


def ensemble_size_rule(u: float, alpha: float) -> int:
    """Ensemble size ``ceil(2 (u / (1/alpha - 1))^2)`` (at least 1) targeting a
    coupling success of ``alpha`` times the maximal one."""
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if u < 0:
        raise ValueError("u must be nonnegative")
    value = 2.0 * (u / (1.0 / alpha - 1.0)) ** 2
    # guard against ceil(128.00000000000003)
    return max(1, math.ceil(value * (1.0 - 1e-12)))


# --- diagnostics --------------------------------------------------------------


@dataclass
class CouplingDiagnostics:
    n_draws: int
    met_rate: float
    met_se: float
    tau_mean: float
    tau_var: float
    proposal_met_rate: float
    overlap: float
    lower_bound_lN: float
    upper_bound_uN: float
    u_stat: float
    px_hat: float
    py_hat: float


def _lil_term(n):
    return math.sqrt(2.0 * n * math.log(math.log(n))) / n


def asymptotic_bounds(proposal_met, overlap, u, px, py, n):
    """Evaluate the large-``n`` forms ``(l_N, u_N)`` of the coupling probability."""
    s = u * _lil_term(n)
    lower = proposal_met * overlap / (1.0 + s) * n / (n - 1.0 + 1.0 / px) * n / (n - 1.0 + 1.0 / py)
    upper = proposal_met * (2.0 - overlap) / (1.0 - s) if s < 1.0 else math.inf
    return lower, upper


def estimate_overlap(p: Density, q: Density, rng, draws: int = 10**5) -> float:
    """Monte-Carlo estimate of ``int min(p, q) = E_p[min(1, q/p)]``."""
    bank = StreamBank.split(rng, draws) if isinstance(rng, RngStream) else rng
    x = as_points(p.sample(bank), p.dim)
    return float(np.mean(np.exp(np.minimum(0.0, q.log_pdf(x) - p.log_pdf(x)))))


def estimate_diagnostics(
    dom: DominatingPair,
    p: Density,
    q: Density,
    n: int,
    draws: int,
    rng: RngStream,
    overlap: float | None = None,
) -> CouplingDiagnostics:
    """Simulate the ensemble engine and estimate the quantities entering the
    asymptotic coupling bounds.

    ``u_stat`` uses unbiased sample standard deviations of the importance
    weights; ``px_hat``/``py_hat`` average the acceptance ratios over proposal
    pairs that met.  ``overlap`` defaults to a Monte-Carlo estimate.
    """
    if draws < 1000:
        raise ValueError("need at least 1000 draws")
    if n < 3:
        raise ValueError("n must be at least 3")
    sim = ensemble_rejection_couple(dom, p, q, n, StreamBank.split(split_stream(rng, 0), draws))
    bank = StreamBank.split(split_stream(rng, 1), draws)
    xh, yh = dom.coupler.sample(bank)
    met_hat = np.all(xh == yh, axis=1)
    if not met_hat.any():
        raise NoCoupledProposals(f"dominating coupling never met in {draws} draws")
    lx = dom.log_accept_p(p, xh)
    ly = dom.log_accept_q(q, yh)
    wx = dom.m_p * np.exp(lx)
    wy = dom.m_q * np.exp(ly)
    u_stat = float(max(np.std(wx, ddof=1), np.std(wy, ddof=1)))
    px = float(np.mean(np.exp(lx[met_hat])))
    py = float(np.mean(np.exp(ly[met_hat])))
    if overlap is None:
        overlap = estimate_overlap(p, q, split_stream(rng, 2), draws)
    prop_met = float(np.mean(met_hat))
    lower, upper = asymptotic_bounds(prop_met, overlap, u_stat, px, py, n)
    met_rate = sim.met_rate
    return CouplingDiagnostics(
        n_draws=draws,
        met_rate=met_rate,
        met_se=math.sqrt(max(met_rate * (1 - met_rate), 1e-300) / draws),
        tau_mean=float(np.mean(sim.steps)),
        tau_var=float(np.var(sim.steps, ddof=1)),
        proposal_met_rate=prop_met,
        overlap=float(overlap),
        lower_bound_lN=lower,
        upper_bound_uN=upper,
        u_stat=u_stat,
        px_hat=px,
        py_hat=py,
    )
