"""Likelihood processes over discrete base measures: Bernoulli, negative
binomial and Poisson, plus negative binomial pmf utilities.

Negative binomial convention throughout: ``NegBin(r, b)`` has pmf
``Gamma(k+r) / (k! Gamma(r)) (1-b)^r b^k`` and mean ``r b / (1-b)``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import ParameterError
from .measures import AtomicMeasure, CountMeasure, check_unit_weights


def _check_negbin(r, b):
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(r > 0)):
        raise ParameterError("negative binomial shape r must be positive")
    if np.any(~((b > 0) & (b < 1))):
        raise ParameterError("negative binomial probability b must lie in (0, 1)")
    return r, b


def negbin_logpmf(k, r, b):
    """Log pmf, evaluated entirely through log-gamma."""
    r, b = _check_negbin(r, b)
    k = np.asarray(k, dtype=float)
    out = (special.gammaln(k + r) - special.gammaln(k + 1) - special.gammaln(r)
           + r * np.log1p(-b) + special.xlogy(k, b))
    return np.where(k < 0, -np.inf, out)


def negbin_pmf(k, r, b):
    return np.exp(negbin_logpmf(k, r, b))


def negbin_mean(r, b):
    r, b = _check_negbin(r, b)
    return r * b / (1 - b)


def draw_nbp(r: float, base: AtomicMeasure, rng: np.random.Generator) -> CountMeasure:
    """Independent ``NegBin(r, b_k)`` at every atom of ``base``."""
    if not r > 0:
        raise ParameterError("shape r must be positive")
    if len(base) == 0:
        return CountMeasure.empty()
    check_unit_weights(base, allow_one=False)
    # numpy parameterizes by the success probability 1 - b
    counts = rng.negative_binomial(r, 1.0 - base.weights)
    return CountMeasure(base.locations, counts)


def draw_bernoulli_process(base: AtomicMeasure, rng: np.random.Generator) -> CountMeasure:
    if len(base) == 0:
        return CountMeasure.empty()
    check_unit_weights(base, allow_one=True)
    counts = (rng.random(len(base)) < base.weights).astype(np.int64)
    return CountMeasure(base.locations, counts)


def draw_plp(base: AtomicMeasure, rng: np.random.Generator) -> CountMeasure:
    """Poisson likelihood process: ``Poisson(g_k)`` at each atom."""
    if len(base) == 0:
        return CountMeasure.empty()
    if np.any(base.weights <= 0):
        raise ParameterError("Poisson rates must be positive")
    return CountMeasure(base.locations, rng.poisson(base.weights))


def draw_negbin_augmented(r, b, rng: np.random.Generator, size=None):
    """Gamma-Poisson representation: ``lam ~ Gamma(r, rate=(1-b)/b)``,
    ``k ~ Poisson(lam)``; returns ``(lam, k)``."""
    r, b = _check_negbin(r, b)
    lam = rng.gamma(r, b / (1 - b), size=size)
    return lam, rng.poisson(lam)
