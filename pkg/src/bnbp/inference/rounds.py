"""Prior over the round labels of the size-biased beta process construction.

Atoms are listed in round order. Round ``i`` holds ``C_i ~ Poisson(mu_i)``
atoms with ``mu_i = conc0 mass0 / (conc0 + i)``. For the first ``K`` atoms
with rounds ``m_1 <= ... <= m_K`` and occupancies ``c_i``,

    P(m_1..m_K) = prod_{i < m_K} Pois(c_i; mu_i) * P(C_{m_K} >= c_{m_K}),

since every earlier round is complete while the last one may hold more atoms
beyond the ``K`` listed. Gaps ``g_k = m_k - m_{k-1}`` (``m_0 = 0``) encode the
same information.
"""

from __future__ import annotations

import numpy as np
from scipy import special, stats

MAX_GAP = 100_000


def round_rates(n_rounds: int, mass0: float, conc0: float) -> np.ndarray:
    return conc0 * mass0 / (conc0 + np.arange(n_rounds, dtype=float))


def log_round_prior(rounds: np.ndarray, mass0: float, conc0: float) -> float:
    """Log probability of the nondecreasing round sequence ``rounds``."""
    rounds = np.asarray(rounds, dtype=np.int64)
    if len(rounds) == 0:
        return 0.0
    if rounds[0] < 0 or np.any(np.diff(rounds) < 0):
        return -np.inf
    last = int(rounds[-1])
    occ = np.bincount(rounds, minlength=last + 1).astype(float)
    mu = round_rates(last + 1, mass0, conc0)
    c, m = occ[:last], mu[:last]
    out = float(np.sum(c * np.log(m) - m - special.gammaln(c + 1)))
    # P(C >= c) for c >= 1 is the regularized lower incomplete gamma P(c, mu)
    return out + float(np.log(special.gammainc(occ[last], mu[last])))


def sample_next_round(rounds: np.ndarray, mass0: float, conc0: float, rng) -> int:
    """Round of the next atom given the rounds of the atoms before it."""
    if len(rounds) == 0:
        start, c = 0, 0
    else:
        start, c = int(rounds[-1]), int(np.sum(rounds == rounds[-1]))
        mu = conc0 * mass0 / (conc0 + start)
        # stay in the current round with P(C >= c+1 | C >= c)
        p_stay = np.exp(stats.poisson.logsf(c, mu) - stats.poisson.logsf(c - 1, mu))
        if rng.random() < p_stay:
            return start
        start += 1
    # later rounds: the first nonempty one
    i = start
    while i - start < MAX_GAP:
        mu = conc0 * mass0 / (conc0 + i)
        if rng.random() < -np.expm1(-mu):
            return i
        i += 1
    return i


def sample_round_sequence(n_atoms: int, mass0: float, conc0: float, rng) -> np.ndarray:
    """Forward simulation through round counts (independent of the
    sequential formula above, used for checking it)."""
    out = []
    i = 0
    while len(out) < n_atoms:
        c = rng.poisson(conc0 * mass0 / (conc0 + i))
        out.extend([i] * c)
        i += 1
    return np.asarray(out[:n_atoms], dtype=np.int64)


def _occupancy_terms(counts, log_mu):
    return counts * log_mu - special.gammaln(counts + 1)


def log_round_prior_gaps(rounds: np.ndarray, k: int, gaps: np.ndarray, mass0: float, conc0: float) -> np.ndarray:
    """:func:`log_round_prior` of ``rounds`` with the gap before component
    ``k`` replaced by each entry of ``gaps`` (later components shift along).
    Equal to calling the sequential formula once per candidate, but
    vectorized over the candidates."""
    rounds = np.asarray(rounds, dtype=np.int64)
    gaps = np.asarray(gaps, dtype=np.int64)
    log_scale = np.log(conc0 * mass0)
    prev = int(rounds[k - 1]) if k else 0
    hu, hc = np.unique(rounds[:k], return_counts=True)
    tu, tc = np.unique(rounds[k:] - rounds[k], return_counts=True)
    hc, tc = hc.astype(float), tc.astype(float)
    head = float(np.sum(_occupancy_terms(hc, log_scale - np.log(conc0 + hu))))
    R = (prev + gaps)[:, None] + tu[None, :]
    log_mu = log_scale - np.log(conc0 + R)
    last = R[:, -1]
    out = head + np.sum(_occupancy_terms(tc[None, :-1], log_mu[:, :-1]), axis=1)
    out += np.log(special.gammainc(tc[-1], np.exp(log_mu[:, -1])))
    out -= conc0 * mass0 * (special.digamma(conc0 + last) - special.digamma(conc0))
    if k:
        # a zero gap merges the first tail round into the last head round
        merge = gaps == 0
        if np.any(merge):
            lm = log_scale - np.log(conc0 + prev)
            cp, c0 = hc[-1], tc[0]
            fix = -_occupancy_terms(cp, lm)
            if len(tc) > 1:
                fix += _occupancy_terms(cp + c0, lm) - _occupancy_terms(c0, lm)
            else:
                fix += np.log(special.gammainc(cp + c0, np.exp(lm))) - np.log(special.gammainc(c0, np.exp(lm)))
            out = np.where(merge, out + fix, out)
    return out
