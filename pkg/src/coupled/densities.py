"""Marginal distributions with an evaluable log-density and a direct sampler.

All densities work on batches: points are float arrays of shape ``(n, dim)``
(categorical outcomes are stored as float indices), ``log_pdf`` returns shape
``(n,)`` and ``sample(bank)`` returns one point per lane of the bank.
``sample_many(bank, k)`` returns ``(lanes, k, dim)`` and consumes each lane's
stream exactly as ``k`` successive ``sample`` calls would.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import log_ndtr

from .errors import MaxIterExceeded, NotPositiveDefinite
from .rng import StreamBank

LOG_2PI = np.log(2.0 * np.pi)
DEFAULT_CAP = 10**6


def as_points(x, dim):
    """Coerce ``x`` to a ``(n, dim)`` float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, dim) if x.size == dim else x.reshape(-1, dim)
    return x


class Density:
    """Interface shared by every marginal distribution."""

    dim: int = 1

    def log_pdf(self, x):
        raise NotImplementedError

    def sample(self, bank: StreamBank):
        raise NotImplementedError

    def sample_many(self, bank: StreamBank, k: int):
        return np.stack([self.sample(bank) for _ in range(k)], axis=1)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


def cholesky_lower(sigma):
    sigma = np.asarray(sigma, dtype=float)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"matrix is not positive definite: {exc}") from None


@dataclass
class GaussianParams:
    """Mean, covariance and the cached lower Cholesky factor / log-determinant."""

    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    log_det: float = field(init=False)

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d):
            raise ValueError(f"covariance shape {self.sigma.shape} does not match mean of length {d}")
        if not np.allclose(self.sigma, self.sigma.T, rtol=1e-12, atol=0.0):
            raise NotPositiveDefinite("covariance is not symmetric")
        self.chol = cholesky_lower(self.sigma)
        self.log_det = float(2.0 * np.sum(np.log(np.diag(self.chol))))

    @property
    def dim(self):
        return self.mu.shape[0]

    def precision(self):
        inv_l = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        prec = inv_l.T @ inv_l
        return 0.5 * (prec + prec.T)

    def whiten(self, x):
        """``L^{-1}(x - mu)`` for each row of ``x``."""
        return solve_triangular(self.chol, (as_points(x, self.dim) - self.mu).T, lower=True).T


class MultivariateNormal(Density):
    def __init__(self, mu=None, sigma=None, params: GaussianParams | None = None):
        if params is None:
            mu = np.atleast_1d(np.asarray(mu, dtype=float))
            sigma = np.eye(mu.shape[0]) if sigma is None else sigma
            params = GaussianParams(mu, sigma)
        self.params = params
        self.dim = params.dim

    @property
    def mu(self):
        return self.params.mu

    @property
    def sigma(self):
        return self.params.sigma

    def log_pdf(self, x):
        z = self.params.whiten(x)
        return -0.5 * np.sum(z * z, axis=1) - 0.5 * (self.dim * LOG_2PI + self.params.log_det)

    def sample(self, bank):
        z = bank.normal(self.dim)
        return self.mu + z @ self.params.chol.T

    def sample_many(self, bank, k):
        z = bank.normal(k, self.dim)
        return self.mu + z @ self.params.chol.T


def normal(mu=0.0, var=1.0):
    """One-dimensional Gaussian."""
    return MultivariateNormal([mu], [[var]])


@dataclass
class CategoricalWeights:
    w: np.ndarray
    normalized: np.ndarray = field(init=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1 or np.any(self.w < 0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be a finite nonnegative vector")
        total = self.w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        self.normalized = self.w / total

    def __len__(self):
        return len(self.w)


def inverse_cdf_rows(weights, u):
    """Row-wise inverse CDF of unnormalized categorical ``weights``
    (shape ``(rows, k)``) at uniforms ``u`` (shape ``(rows,)``).

    Always returns an index with positive weight when the row has any mass.
    """
    weights = np.asarray(weights, dtype=float)
    cum = np.cumsum(weights, axis=1)
    target = u * cum[:, -1]
    idx = np.sum(cum <= target[:, None], axis=1)
    positive = weights > 0
    last_pos = weights.shape[1] - 1 - np.argmax(positive[:, ::-1], axis=1)
    return np.minimum(idx, last_pos)


class Categorical(Density):
    """Categorical law on ``{0, ..., k-1}``; points are float indices."""

    dim = 1

    def __init__(self, weights):
        self.weights = weights if isinstance(weights, CategoricalWeights) else CategoricalWeights(weights)
        with np.errstate(divide="ignore"):
            self._logw = np.log(self.weights.normalized)

    def log_pdf(self, x):
        x = as_points(x, 1)[:, 0]
        idx = x.astype(np.int64)
        ok = (idx == x) & (idx >= 0) & (idx < len(self.weights))
        out = np.full(x.shape, -np.inf)
        out[ok] = self._logw[idx[ok]]
        return out

    def sample(self, bank):
        u = bank.uniform()
        w = np.broadcast_to(self.weights.normalized, (len(u), len(self.weights)))
        return inverse_cdf_rows(w, u).astype(float)[:, None]


class Uniform(Density):
    """Uniform law on ``[lo, hi)`` in one dimension."""

    dim = 1

    def __init__(self, lo, hi):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi = float(lo), float(hi)

    def log_pdf(self, x):
        x = as_points(x, 1)[:, 0]
        inside = (x >= self.lo) & (x < self.hi)
        return np.where(inside, -np.log(self.hi - self.lo), -np.inf)

    def sample(self, bank):
        return (self.lo + (self.hi - self.lo) * bank.uniform())[:, None]


class Mixture(Density):
    """Finite mixture; every component is drawn for every lane and one is kept,
    so stream consumption per lane does not depend on the selected component."""

    def __init__(self, components, weights):
        self.components = list(components)
        self.weights = CategoricalWeights(weights)
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("mixture components must share a dimension")
        self.dim = dims.pop()
        with np.errstate(divide="ignore"):
            self._logw = np.log(self.weights.normalized)

    def log_pdf(self, x):
        x = as_points(x, self.dim)
        terms = np.stack([lw + c.log_pdf(x) for lw, c in zip(self._logw, self.components)])
        top = np.max(terms, axis=0)
        safe = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(divide="ignore"):
            return safe + np.log(np.sum(np.exp(terms - safe), axis=0))

    def sample(self, bank):
        u = bank.uniform()
        k = inverse_cdf_rows(np.broadcast_to(self.weights.normalized, (len(u), len(self.components))), u)
        draws = np.stack([c.sample(bank) for c in self.components], axis=1)
        return draws[np.arange(len(u)), k]


class TranslatedExponential(Density):
    """``rate * exp(-rate (x - shift))`` on ``x >= shift``."""

    dim = 1

    def __init__(self, shift, rate):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.shift, self.rate = float(shift), float(rate)

    def log_pdf(self, x):
        x = as_points(x, 1)[:, 0]
        return np.where(x >= self.shift, np.log(self.rate) - self.rate * (x - self.shift), -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.shift, -np.expm1(-self.rate * (x - self.shift)), 0.0)

    def sample(self, bank):
        return (self.shift + bank.exponential() / self.rate)[:, None]

    def sample_many(self, bank, k):
        return (self.shift + bank.exponential(k) / self.rate)[:, :, None]


def robert_rate(z):
    """Optimal exponential rate ``(z + sqrt(z^2 + 4)) / 2`` for the tail ``x > z``,
    written to avoid cancellation for negative ``z``."""
    z = np.asarray(z, dtype=float)
    root = np.sqrt(z * z + 4.0)
    with np.errstate(divide="ignore"):
        out = np.where(z >= 0, 0.5 * (z + root), 2.0 / (root - z))
    return out if out.ndim else float(out)


class TruncatedNormalTail(Density):
    """Standard normal conditioned on ``x > m``, sampled with Robert's
    translated-exponential rejection sampler (rate ``robert_rate(m)``)."""

    dim = 1

    def __init__(self, m, cap: int = DEFAULT_CAP):
        self.m = float(m)
        self.rate = robert_rate(self.m)
        self.cap = cap
        self._log_mass = float(log_ndtr(-self.m))

    def log_pdf(self, x):
        x = as_points(x, 1)[:, 0]
        return np.where(x > self.m, -0.5 * x * x - 0.5 * LOG_2PI - self._log_mass, -np.inf)

    def log_accept(self, x):
        """Log of the Robert acceptance ratio ``exp(-(x - rate)^2 / 2)``."""
        return -0.5 * (np.asarray(x, dtype=float) - self.rate) ** 2

    def sample(self, bank):
        n = len(bank)
        out = np.empty(n)
        active = np.arange(n)
        for _ in range(self.cap):
            sub = bank[active]
            x = self.m + sub.exponential() / self.rate
            ok = np.log(sub.uniform()) < self.log_accept(x)
            out[active[ok]] = x[ok]
            active = active[~ok]
            if active.size == 0:
                return out[:, None]
        raise MaxIterExceeded("truncated normal tail sampler", self.cap, m=self.m)
