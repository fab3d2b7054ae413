"""Coupled rejection sampling: diagonal couplings of arbitrary distributions
by accepting or rejecting coupled proposals from dominating marginals."""

from .couplings import (
    CoupledDraw,
    CoupledDraws,
    categorical_maximal_coupling,
    maximal_coupling_generic,
    reflection_maximal_gaussian,
    thorisson_modified,
)
from .densities import GaussianParams, MultivariateNormal, TranslatedExponential, TruncatedNormalTail
from .gaussian import gaussian_coupling_bounds, gaussian_dominating_pair, sigma_max, sigma_opt
from .rejection import (
    DominatingPair,
    duplicated_proposal,
    ensemble_rejection_couple,
    estimate_diagnostics,
    maximal_dominating_pair,
    rejection_couple,
)
from .rng import RngStream, StreamBank, split_stream

__version__ = "0.1.0"

__all__ = [
    "CoupledDraw",
    "CoupledDraws",
    "DominatingPair",
    "GaussianParams",
    "MultivariateNormal",
    "RngStream",
    "StreamBank",
    "TranslatedExponential",
    "TruncatedNormalTail",
    "categorical_maximal_coupling",
    "duplicated_proposal",
    "ensemble_rejection_couple",
    "estimate_diagnostics",
    "gaussian_coupling_bounds",
    "gaussian_dominating_pair",
    "maximal_coupling_generic",
    "maximal_dominating_pair",
    "reflection_maximal_gaussian",
    "rejection_couple",
    "sigma_max",
    "sigma_opt",
    "split_stream",
    "thorisson_modified",
]
