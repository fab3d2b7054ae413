"""Exact couplings used as dominating proposals and as baselines.

Every sampler accepts either an :class:`RngStream` (one coupled draw,
returned as :class:`CoupledDraw`) or a :class:`StreamBank` (one draw per
lane, returned as :class:`CoupledDraws`).  Batched execution is bit-identical
to running the lanes one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtri

from .densities import CategoricalWeights, Density, as_points, cholesky_lower, inverse_cdf_rows
from .errors import LengthMismatch, MaxIterExceeded
from .rng import RngStream, StreamBank, single_lane

DEFAULT_CAP = 10**6


@dataclass
class CoupledDraw:
    x: np.ndarray
    y: np.ndarray
    met: bool
    steps: int


@dataclass
class CoupledDraws:
    """A batch of coupled draws; row ``i`` is lane ``i``."""

    x: np.ndarray
    y: np.ndarray
    met: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return len(self.met)

    def __getitem__(self, i) -> CoupledDraw:
        return CoupledDraw(self.x[i].copy(), self.y[i].copy(), bool(self.met[i]), int(self.steps[i]))

    @property
    def met_rate(self):
        return float(np.mean(self.met))

    @classmethod
    def build(cls, x, y, steps):
        met = np.all(x == y, axis=1)
        return cls(x, y, met, np.asarray(steps, dtype=np.int64))


def run_batched(sampler, rng, *args, **kwargs):
    """Call ``sampler(*args, bank, **kwargs)`` on a bank, or on a one-lane bank
    wrapping ``rng`` and unpack the single result."""
    if isinstance(rng, StreamBank):
        return sampler(*args, rng, **kwargs)
    if not isinstance(rng, RngStream):
        raise TypeError("rng must be an RngStream or a StreamBank")
    with single_lane(rng) as bank:
        out = sampler(*args, bank, **kwargs)
    return out[0]


def same_point(x, y):
    return np.all(x == y, axis=-1)


# --- generic maximal coupling -------------------------------------------------


def _maximal_generic(p: Density, q: Density, bank, cap=DEFAULT_CAP):
    n = len(bank)
    x = as_points(p.sample(bank), p.dim)
    log_u = np.log(bank.uniform())
    y = x.copy()
    steps = np.ones(n, dtype=np.int64)
    residual = np.flatnonzero(log_u + p.log_pdf(x) > q.log_pdf(x))
    for _ in range(cap):
        if residual.size == 0:
            return CoupledDraws.build(x, y, steps)
        sub = bank[residual]
        z = as_points(q.sample(sub), q.dim)
        log_v = np.log(sub.uniform())
        steps[residual] += 1
        ok = log_v + q.log_pdf(z) > p.log_pdf(z)
        y[residual[ok]] = z[ok]
        residual = residual[~ok]
    raise MaxIterExceeded("maximal coupling residual loop", cap, pending_lanes=int(residual.size))


def maximal_coupling_generic(p: Density, q: Density, rng, cap: int = DEFAULT_CAP):
    """Maximal coupling of ``p`` and ``q`` by the two-branch scheme.

    ``x ~ p``; with a uniform ``u`` the pair is set to ``y = x`` when
    ``u p(x) <= q(x)``, otherwise ``y`` is drawn from ``q`` until a fresh
    ``u'`` satisfies ``u' q(y) > p(y)``.  ``steps`` counts density draws.
    """
    return run_batched(_maximal_generic, rng, p, q, cap=cap)


# --- reflection-maximal coupling ----------------------------------------------


class ReflectionCoupling:
    """Reflection-maximal coupling of ``N(a, S)`` and ``N(b, S)``.

    Each draw consumes one standard normal vector followed by one uniform.
    """

    def __init__(self, a, b, sigma=None, chol=None):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.a.shape != self.b.shape:
            raise LengthMismatch("means must have the same dimension")
        self.chol = cholesky_lower(sigma) if chol is None else np.asarray(chol, dtype=float)
        self.dim = self.a.shape[0]
        self.z = solve_triangular(self.chol, self.a - self.b, lower=True)
        norm = np.linalg.norm(self.z)
        self.e = self.z / norm if norm > 0 else np.zeros_like(self.z)
        self.identical = bool(np.all(self.a == self.b))

    def _from_uniforms(self, blocks):
        """``blocks[..., :dim]`` are uniforms mapped to normals, ``blocks[..., dim]``
        is the acceptance uniform; returns (x, y)."""
        xd = ndtri(blocks[..., : self.dim])
        log_u = np.log(blocks[..., self.dim])
        shifted = xd + self.z
        same = log_u < -0.5 * (np.sum(shifted * shifted, axis=-1) - np.sum(xd * xd, axis=-1))
        if self.identical:
            same = np.ones_like(same)
        yd = np.where(same[..., None], shifted, xd - 2.0 * (xd @ self.e)[..., None] * self.e)
        x = self.a + xd @ self.chol.T
        y = np.where(same[..., None], x, self.b + yd @ self.chol.T)
        return x, y

    def sample(self, bank):
        return self._from_uniforms(bank.uniform(self.dim + 1))

    def sample_many(self, bank, k):
        return self._from_uniforms(bank.uniform(k, self.dim + 1))

    def replay(self, xd):
        """Partner point of the reflection branch for a given standard normal ``xd``."""
        yd = xd - 2.0 * (xd @ self.e) * self.e
        return self.b + self.chol @ yd


def _reflection(a, b, sigma, bank):
    coupling = ReflectionCoupling(a, b, sigma)
    x, y = coupling.sample(bank)
    return CoupledDraws.build(x, y, np.ones(len(bank)))


def reflection_maximal_gaussian(a, b, sigma, rng):
    """Reflection-maximal coupling of ``N(a, sigma)`` and ``N(b, sigma)``.

    When the mean shift is accepted the two outputs are the same array values
    (``y = x``), otherwise ``y`` is the Householder reflection of the same
    standard-normal draw.  ``sigma^{1/2}`` is the lower Cholesky factor.
    """
    return run_batched(_reflection, rng, a, b, sigma)


# --- categorical maximal coupling ---------------------------------------------


def categorical_coupling_rows(wx, wy, bank):
    """Maximal coupling of categorical rows ``wx[r]`` and ``wy[r]`` (unnormalized,
    shape ``(rows, k)``).  Consumes three uniforms per lane; returns ``(i, j)``.
    Rows without mass return an arbitrary valid index."""
    wx = np.asarray(wx, dtype=float)
    wy = np.asarray(wy, dtype=float)
    u = bank.uniform(3)
    sx = wx.sum(axis=1, keepdims=True)
    sy = wy.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        px = np.where(sx > 0, wx / sx, 0.0)
        py = np.where(sy > 0, wy / sy, 0.0)
    overlap = np.minimum(px, py)
    mass = overlap.sum(axis=1)
    rx = np.maximum(px - overlap, 0.0)
    ry = np.maximum(py - overlap, 0.0)
    has_residual = (rx.sum(axis=1) > 0) & (ry.sum(axis=1) > 0)
    common = (u[:, 0] < mass) | ~has_residual
    i_common = inverse_cdf_rows(np.where(mass[:, None] > 0, overlap, 1.0), u[:, 1])
    i_res = inverse_cdf_rows(np.where(has_residual[:, None], rx, 1.0), u[:, 1])
    j_res = inverse_cdf_rows(np.where(has_residual[:, None], ry, 1.0), u[:, 2])
    i = np.where(common, i_common, i_res)
    j = np.where(common, i_common, j_res)
    return i, j


def _categorical(wx, wy, bank):
    n = len(bank)
    i, j = categorical_coupling_rows(np.broadcast_to(wx, (n, len(wx))), np.broadcast_to(wy, (n, len(wy))), bank)
    return i, j, i == j


def categorical_maximal_coupling(wx, wy, rng):
    """Maximal coupling of two categorical laws; returns ``(i, j, met)``.

    With a bank the three entries are arrays over lanes.
    """
    wx = wx if isinstance(wx, CategoricalWeights) else CategoricalWeights(wx)
    wy = wy if isinstance(wy, CategoricalWeights) else CategoricalWeights(wy)
    if len(wx) != len(wy):
        raise LengthMismatch(f"weight vectors have lengths {len(wx)} and {len(wy)}")
    if isinstance(rng, StreamBank):
        return _categorical(wx.normalized, wy.normalized, rng)
    with single_lane(rng) as bank:
        i, j, met = _categorical(wx.normalized, wy.normalized, bank)
    return int(i[0]), int(j[0]), bool(met[0])


def categorical_overlap(wx, wy):
    wx = wx if isinstance(wx, CategoricalWeights) else CategoricalWeights(wx)
    wy = wy if isinstance(wy, CategoricalWeights) else CategoricalWeights(wy)
    if len(wx) != len(wy):
        raise LengthMismatch(f"weight vectors have lengths {len(wx)} and {len(wy)}")
    return float(np.sum(np.minimum(wx.normalized, wy.normalized)))


# --- modified Thorisson -------------------------------------------------------


def _thorisson(p: Density, q: Density, c, bank, cap=DEFAULT_CAP):
    n = len(bank)
    x = as_points(p.sample(bank), p.dim)
    log_u = np.log(bank.uniform())
    log_c = np.log(c)
    y = x.copy()
    steps = np.ones(n, dtype=np.int64)
    keep = log_u < np.minimum(q.log_pdf(x) - p.log_pdf(x), log_c)
    residual = np.flatnonzero(~keep)
    for _ in range(cap):
        if residual.size == 0:
            return CoupledDraws.build(x, y, steps)
        sub = bank[residual]
        log_v = np.log(sub.uniform())
        z = as_points(q.sample(sub), q.dim)
        steps[residual] += 1
        ok = log_v > np.minimum(0.0, log_c + p.log_pdf(z) - q.log_pdf(z))
        y[residual[ok]] = z[ok]
        residual = residual[~ok]
    raise MaxIterExceeded("modified Thorisson loop", cap, c=c, pending_lanes=int(residual.size))


def thorisson_modified(p: Density, q: Density, c: float, rng, cap: int = DEFAULT_CAP):
    """Modified Thorisson coupling with success probability ``c * overlap``.

    ``steps`` is one plus the number of ``q`` draws made by the residual loop.
    The last proposal of the loop becomes ``y`` on exit.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError("c must lie in (0, 1]")
    return run_batched(_thorisson, rng, p, q, c, cap=cap)
