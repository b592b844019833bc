"""Held-out document likelihood under posterior samples.

For each retained sample (top-level weights, topics) and each of ``S`` inner
draws: per-document weights ``b_k ~ Beta(mass_d conc_d b0_k, conc_d (1 -
mass_d b0_k))``, rates ``rate_k ~ Gamma(r, scale b_k / (1 - b_k))``, and the
document's probability as a Poisson length times a mixture over the rates:

    Pois(N; R) * prod_n sum_k (rate_k / R) F(x_n | topic_k),  R = sum_k rate_k.

The estimate is the log of the average over all (sample, inner draw) pairs.
Components that a sample does not represent contribute nothing, and the
token order is treated as given (the multinomial coefficient is common to
every model and is omitted).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import special

from ..errors import DomainError
from .kernels import robust_beta

ESTIMATOR = "prior-predictive Monte Carlo over per-document weights and rates"
_PROB_FLOOR = 1e-300


@dataclass
class PosteriorSample:
    iteration: int
    shared: np.ndarray
    topics: List[np.ndarray]


def _doc_logliks(sample: PosteriorSample, words: np.ndarray, shape: float, mass_d: float,
                 conc_d: float, S: int, rng) -> np.ndarray:
    K = len(sample.shared)
    probs = np.ones((K, len(words)))
    for f, t in enumerate(sample.topics):
        probs *= t[:, words[:, f]]
    a = mass_d * conc_d * sample.shared
    b = robust_beta(np.broadcast_to(a, (S, K)), np.broadcast_to(conc_d - a, (S, K)), rng)
    rates = rng.gamma(shape, b / (1 - b))
    total = rates.sum(axis=1)
    mix = np.maximum(rates @ probs, _PROB_FLOOR)            # (S, N): sum_k rate_k F_k(x_n)
    N = len(words)
    return np.log(mix).sum(axis=1) - total - special.gammaln(N + 1)


def predictive_loglik(samples: Sequence[PosteriorSample], words, shape: float, mass_d: float,
                      conc_d: float, S: int = 100, rng=None, return_se: bool = False):
    """Log predictive probability of one document (token array ``(N, F)``)."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[:, None]
    if len(words) == 0:
        raise DomainError("document is empty")
    if not samples:
        raise DomainError("no posterior samples")
    rng = np.random.default_rng() if rng is None else rng
    ll = np.concatenate([_doc_logliks(s, words, shape, mass_d, conc_d, S, rng) for s in samples])
    est = float(special.logsumexp(ll) - np.log(len(ll)))
    if not return_se:
        return est
    # delta-method standard error of the log of a Monte Carlo mean
    w = np.exp(ll - ll.max())
    se = float(w.std(ddof=1) / np.sqrt(len(w)) / w.mean()) if len(w) > 1 else float("nan")
    return est, se


def score_documents(samples, docs: Sequence[np.ndarray], shape: float, mass_d: float, conc_d: float,
                    S: int = 100, seed: int = 0, workers: int = 1) -> np.ndarray:
    """Scores for many documents; document ``i`` always uses RNG stream ``i``
    so results do not depend on ``workers``."""
    streams = np.random.SeedSequence(seed).spawn(len(docs))

    def one(i):
        return predictive_loglik(samples, docs[i], shape, mass_d, conc_d, S, np.random.default_rng(streams[i]))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(one, range(len(docs)))))
    return np.array([one(i) for i in range(len(docs))])
