"""Scalar numeric primitives: standard normal CDF and Chandrupatla's
bracketing root finder (vectorized over independent brackets)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erfc

from .errors import MaxIterExceeded, NoSignChange

_EPS = np.finfo(float).eps
_SQRT1_2 = np.sqrt(0.5)

TOL_X = 1e-12
TOL_F = 1e-12
MAX_ITER = 100


def std_normal_cdf(x):
    """Standard normal CDF through ``erfc``; accurate in both tails since
    ``erfc`` never forms ``1 - small``."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) * _SQRT1_2)


def pairwise_sum(a, axis=-1):
    """Sum along ``axis`` with a fixed binary-tree order, so the result for a
    row never depends on how many rows are reduced together."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    while a.shape[-1] > 1:
        if a.shape[-1] % 2:
            a = np.concatenate([a, np.zeros(a.shape[:-1] + (1,))], axis=-1)
        a = a[..., 0::2] + a[..., 1::2]
    return a[..., 0] if a.shape[-1] else np.zeros(a.shape[:-1])


@dataclass(frozen=True)
class RootBracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float
    tol_x: float = TOL_X
    tol_f: float = TOL_F
    max_iter: int = MAX_ITER

    @classmethod
    def around(cls, f, lo, hi, **tols) -> "RootBracket":
        return cls(float(lo), float(hi), float(f(lo)), float(f(hi)), **tols)


def chandrupatla(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    *,
    f_lo=None,
    f_hi=None,
    tol_x: float = TOL_X,
    tol_f: float = TOL_F,
    max_iter: int = MAX_ITER,
):
    """Solve ``f(x) = 0`` elementwise on the brackets ``[lo, hi]``; returns
    a 1-d array of roots.

    ``f`` must act elementwise on a 1-d array of abscissae (element ``i``
    belongs to bracket ``i``).  Iteration stops per element once
    ``|f(x)| <= tol_f`` or the bracket is narrower than
    ``tol_x + 4 eps |x|``.  Trial points are always strictly inside the
    current bracket, so ``f`` is never evaluated outside ``[lo, hi]``.

    Raises :class:`NoSignChange` for an invalid bracket and
    :class:`MaxIterExceeded` if any element fails to converge.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float)).ravel()
    hi = np.atleast_1d(np.asarray(hi, dtype=float)).ravel()
    f_lo = np.atleast_1d(f(lo) if f_lo is None else f_lo).ravel()
    f_hi = np.atleast_1d(f(hi) if f_hi is None else f_hi).ravel()
    x1, x2, f1, f2 = (np.array(v, dtype=float) for v in np.broadcast_arrays(lo, hi, f_lo, f_hi))

    if np.any(np.sign(f1) * np.sign(f2) > 0):
        bad = np.flatnonzero(np.sign(f1) * np.sign(f2) > 0)[0]
        raise NoSignChange(
            f"no sign change on [{x1[bad]}, {x2[bad]}]: f = ({f1[bad]}, {f2[bad]})"
        )

    x3, f3 = x2.copy(), f2.copy()
    low_end, high_end = np.minimum(x1, x2), np.maximum(x1, x2)

    use1 = np.abs(f1) < np.abs(f2)
    xmin = np.where(use1, x1, x2)
    fmin = np.where(use1, f1, f2)
    done = np.abs(fmin) <= tol_f
    root = np.where(done, xmin, np.nan)
    t = np.full_like(x1, 0.5)

    for _ in range(max_iter):
        if done.all():
            break
        x = np.clip(x1 + t * (x2 - x1), low_end, high_end)
        fx = np.asarray(f(x), dtype=float)

        same = np.sign(fx) == np.sign(f1)
        x3 = np.where(same, x1, x2)
        f3 = np.where(same, f1, f2)
        x2 = np.where(same, x2, x1)
        f2 = np.where(same, f2, f1)
        x1, f1 = x, fx

        use1 = np.abs(f1) < np.abs(f2)
        xmin = np.where(use1, x1, x2)
        fmin = np.where(use1, f1, f2)
        dx = np.abs(x2 - x1)
        tol = tol_x + 4.0 * _EPS * np.abs(xmin)
        newly = ~done & ((dx <= tol) | (np.abs(fmin) <= tol_f))
        root[newly] = xmin[newly]
        done |= newly

        # inverse quadratic interpolation when it stays well inside the bracket
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = (x1 - x2) / (x3 - x2)
            phi = (f1 - f2) / (f3 - f2)
            alpha = (x3 - x1) / (x2 - x1)
            iqi = (1.0 - np.sqrt(1.0 - xi) < phi) & (phi < np.sqrt(xi))
            t_iqi = f1 / (f1 - f2) * f3 / (f3 - f2) - alpha * f1 / (f3 - f1) * f2 / (f2 - f3)
            t = np.where(iqi & np.isfinite(t_iqi), t_iqi, 0.5)
            tl = np.minimum(0.5 * tol / dx, 0.5)
        t = np.clip(np.nan_to_num(t, nan=0.5), tl, 1.0 - tl)
    else:
        if not done.all():
            bad = np.flatnonzero(~done)[0]
            raise MaxIterExceeded("chandrupatla", max_iter, lo=x1[bad], hi=x2[bad])

    return root


def chandrupatla_root(f: Callable[[float], float], bracket: RootBracket) -> float:
    """Scalar front end to :func:`chandrupatla`."""
    root = chandrupatla(
        lambda x: np.asarray([f(float(v)) for v in x]),
        bracket.lo,
        bracket.hi,
        f_lo=bracket.f_lo,
        f_hi=bracket.f_hi,
        tol_x=bracket.tol_x,
        tol_f=bracket.tol_f,
        max_iter=bracket.max_iter,
    )
    return float(root[0])
