"""Coupled parallel rejection resampling and the parallel cost model.

Lane ``m`` (one per particle) runs on ``split_stream(rng, m)``, so results do
not depend on how lanes are scheduled.  Indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .couplings import categorical_coupling_rows
from .errors import LengthMismatch, MaxIterExceeded, ZeroWeights
from .numeric import pairwise_sum
from .rng import RngStream, StreamBank

RESAMPLE_CAP = 10**7


@dataclass
class ParticleWeights:
    w: np.ndarray
    w_bar: float | None = None
    normalized: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1 or not np.all(np.isfinite(self.w)) or np.any(self.w < 0):
            raise ValueError("weights must be a finite nonnegative vector")
        total = self.w.sum()
        if total <= 0:
            raise ZeroWeights("all particle weights are zero")
        self.w_bar = float(self.w.max()) if self.w_bar is None else float(self.w_bar)
        if not self.w_bar > 0 or np.any(self.w > self.w_bar):
            raise ValueError("w_bar must bound every weight")
        self.normalized = self.w / total

    def __len__(self):
        return len(self.w)

    @property
    def ratios(self):
        return self.w / self.w_bar


@dataclass
class ResampleResult:
    bx: np.ndarray
    by: np.ndarray
    met_mask: np.ndarray

    @property
    def met_rate(self):
        return float(np.mean(self.met_mask))


def _check_pair(wx, wy):
    if len(wx) != len(wy):
        raise LengthMismatch(f"weight vectors have lengths {len(wx)} and {len(wy)}")


def maximal_coupling_mass(wx: ParticleWeights, wy: ParticleWeights) -> float:
    """``sum_k min(Wx_k, Wy_k)`` of the normalized weights."""
    _check_pair(wx, wy)
    return float(np.sum(np.minimum(wx.normalized, wy.normalized)))


def _lanes(rng, m):
    return StreamBank.split(rng, m) if isinstance(rng, RngStream) else rng


def _continue_single(ratio, bank, lanes, out, m, cap):
    """Plain rejection loop with uniform index proposals for the given lanes."""
    active = lanes
    for _ in range(cap):
        if active.size == 0:
            return
        sub = bank[active]
        u = sub.uniform()
        b = sub.integers(m)
        ok = u < ratio[b]
        out[active[ok]] = b[ok]
        active = active[~ok]
    raise MaxIterExceeded("rejection resampling lane", cap, pending_lanes=int(active.size))


def coupled_rejection_resample(wx: ParticleWeights, wy: ParticleWeights, rng, cap: int = RESAMPLE_CAP) -> ResampleResult:
    """Coupled parallel rejection resampling.

    Lane ``m`` first proposes the index ``m`` itself, then shared uniform
    index proposals gated by one shared uniform per step; once one margin
    has accepted, the other continues its own rejection loop (X before Y).
    """
    _check_pair(wx, wy)
    m = len(wx)
    bank = _lanes(rng, m)
    rx, ry = wx.ratios, wy.ratios
    bx = np.arange(m)
    by = np.arange(m)
    u = bank.uniform()
    ax = u < rx
    ay = u < ry
    active = np.flatnonzero(~(ax | ay))
    for _ in range(cap):
        if active.size == 0:
            break
        sub = bank[active]
        u = sub.uniform()
        b = sub.integers(m)
        acc_x = u < rx[b]
        acc_y = u < ry[b]
        bx[active[acc_x]] = b[acc_x]
        by[active[acc_y]] = b[acc_y]
        ax[active[acc_x]] = True
        ay[active[acc_y]] = True
        active = active[~(acc_x | acc_y)]
    else:
        raise MaxIterExceeded("coupled rejection resampling", cap, pending_lanes=int(active.size))
    _continue_single(rx, bank, np.flatnonzero(~ax), bx, m, cap)
    _continue_single(ry, bank, np.flatnonzero(~ay), by, m, cap)
    return ResampleResult(bx, by, bx == by)


def _ensemble_single(ratio, bank, lanes, out, m, n, cap):
    active = lanes
    for _ in range(cap):
        if active.size == 0:
            return
        sub = bank[active]
        idx = sub.integers(m, n)
        u = sub.uniform()
        r = ratio[idx]
        s = pairwise_sum(r, axis=1)
        pick = _pick_rows(r, sub.uniform())
        rows = np.arange(len(active))
        ok = u * (s + 1.0 - r[rows, pick]) < s
        out[active[ok]] = idx[rows, pick][ok]
        active = active[~ok]
    raise MaxIterExceeded("ensemble rejection resampling lane", cap, pending_lanes=int(active.size))


def _pick_rows(r, u):
    from .densities import inverse_cdf_rows

    return inverse_cdf_rows(np.where(r.sum(axis=1, keepdims=True) > 0, r, 1.0), u)


def coupled_ensemble_rejection_resample(
    wx: ParticleWeights, wy: ParticleWeights, n: int, rng, cap: int = RESAMPLE_CAP
) -> ResampleResult:
    """Ensemble version of :func:`coupled_rejection_resample`.

    Each step draws ``n`` uniform indices per lane shared by both margins
    (on the first step slot 0 holds the lane's own index), weights them by
    ``w / w_bar``, picks ``(I, J)`` from the maximal coupling of the two weight
    vectors and accepts each margin with the shared-uniform test
    ``u < Z_hat / Z_bar``.  With ``n = 1`` this is the plain resampler.
    """
    _check_pair(wx, wy)
    if n < 1:
        raise ValueError("n must be at least 1")
    m = len(wx)
    bank = _lanes(rng, m)
    rx, ry = wx.ratios, wy.ratios
    bx = np.zeros(m, dtype=np.int64)
    by = np.zeros(m, dtype=np.int64)
    ax = np.zeros(m, dtype=bool)
    ay = np.zeros(m, dtype=bool)
    active = np.arange(m)
    first = True
    for _ in range(cap):
        if active.size == 0:
            break
        sub = bank[active]
        idx = sub.integers(m, n)
        if first:
            idx[:, 0] = active
            first = False
        u = sub.uniform()
        wxr, wyr = rx[idx], ry[idx]
        i, j = categorical_coupling_rows(wxr, wyr, sub)
        rows = np.arange(len(active))
        sx = pairwise_sum(wxr, axis=1)
        sy = pairwise_sum(wyr, axis=1)
        acc_x = u * (sx + 1.0 - wxr[rows, i]) < sx
        acc_y = u * (sy + 1.0 - wyr[rows, j]) < sy
        bx[active[acc_x]] = idx[rows, i][acc_x]
        by[active[acc_y]] = idx[rows, j][acc_y]
        ax[active[acc_x]] = True
        ay[active[acc_y]] = True
        active = active[~(acc_x | acc_y)]
    else:
        raise MaxIterExceeded("coupled ensemble resampling", cap, pending_lanes=int(active.size))
    _ensemble_single(rx, bank, np.flatnonzero(~ax), bx, m, n, cap)
    _ensemble_single(ry, bank, np.flatnonzero(~ay), by, m, n, cap)
    return ResampleResult(bx, by, bx == by)


# --- parallel cost model ------------------------------------------------------


@dataclass(frozen=True)
class CostModelParams:
    m: int
    n: int
    k: float
    p_rs: float

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be at least 1")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not 0.0 < self.p_rs <= 1.0:
            raise ValueError("p_rs must lie in (0, 1]")

    @property
    def p_ers(self):
        return self.n * self.p_rs / ((self.n - 1) * self.p_rs + 1.0)

    @property
    def step_cost(self):
        return self.k + math.log2(self.n)


def max_geometric_samples(p: float, m: int, u):
    """Maximum of ``m`` i.i.d. Geometric(``p``) variables on ``{1, 2, ...}``,
    drawn by inverting its CDF ``(1 - (1 - p)^k)^m`` at uniforms ``u``."""
    u = np.asarray(u, dtype=float)
    if p >= 1.0:
        return np.ones_like(u)
    tail = -np.expm1(np.log(u) / m)  # 1 - u^{1/m}
    k = np.ceil(np.log(tail) / math.log1p(-p))
    return np.maximum(k, 1.0)


def expected_max_geometric(p: float, m: int, tol: float = 1e-15) -> float:
    """``E[max of m Geometric(p)] = sum_{k>=0} 1 - (1 - (1-p)^k)^m`` by series."""
    if p >= 1.0:
        return 1.0
    total, k = 0.0, 0
    log_q = math.log1p(-p)
    while True:
        term = -math.expm1(m * math.log1p(-math.exp(k * log_q))) if k > 0 else 1.0
        total += term
        k += 1
        if term < tol and k > 1:
            return total


def parallel_cost_samples(params: CostModelParams, replications: int, rng) -> np.ndarray:
    """Per-replication costs ``(k + log2 n) * max_m Geometric(p_ERS)``."""
    if replications < 1000:
        raise ValueError("need at least 1000 replications")
    u = StreamBank.split(rng, replications).uniform() if isinstance(rng, RngStream) else rng.uniform()
    return params.step_cost * max_geometric_samples(params.p_ers, params.m, u)


def expected_parallel_cost(params: CostModelParams, replications: int, rng) -> float:
    """Monte-Carlo estimate of the expected parallel run time."""
    samples = parallel_cost_samples(params, replications, rng)
    return float(pairwise_sum(samples) / len(samples))
