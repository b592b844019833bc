"""Joint-distribution (Geweke) check of the Gibbs kernels on a micro model.

The micro model fixes the representation at ``K`` components and conditions
every document on its length. Forward draws come from the prior by rejection
(``P(N_d = n | rates) = Pois(n; sum_k rate_dk)``), then assignments and words.
The successive-conditional chain alternates one Gibbs sweep with a fresh draw
of (assignments, words) given the parameters. Both sides must agree on the
first two moments of a set of summary statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy import special

from .config import SamplerConfig
from .kernels import gibbs_sweep, logit_beta, prior_shared, robust_beta, robust_dirichlet
from .rounds import sample_round_sequence
from .state import HbnbpState, TokenData, count_matrix


@dataclass
class MicroModel:
    n_docs: int = 2
    vocab: int = 5
    doc_len: int = 8
    K: int = 4
    mode: str = "exact"
    collapsed: bool = False

    def config(self) -> SamplerConfig:
        return SamplerConfig(mass0=3.0, conc0=3.0, mass_d=1.0, conc_d=10.0, eta=0.5, shape=2.0,
                             mode=self.mode, n_components=self.K, init_components=self.K,
                             grow=False, collapsed=self.collapsed)


def _token_docs(model: MicroModel) -> np.ndarray:
    return np.repeat(np.arange(model.n_docs), model.doc_len)


def forward_sample(model: MicroModel, rng, batch: int = 64, max_batches: int = 100_000):
    """Draw (state, data) from the micro model's joint distribution."""
    cfg = model.config()
    D, K, n = model.n_docs, model.K, model.doc_len
    log_max = n * math.log(n) - n          # Pois(n; n) is the largest Pois(n; .) value
    for _ in range(max_batches):
        if cfg.mode == "exact":
            rounds = np.stack([sample_round_sequence(K, cfg.mass0, cfg.conc0, rng) for _ in range(batch)])
            shared = prior_shared(K, cfg, rng, rounds)
        else:
            rounds = None
            shared = prior_shared(K, cfg, rng).reshape(1, K) if batch == 1 else \
                robust_beta(np.full((batch, K), cfg.conc0 * cfg.mass0 / K),
                            np.full((batch, K), cfg.conc0 * (1 - cfg.mass0 / K)), rng)
        a = np.repeat((cfg.mass_d * cfg.conc_d * shared)[:, None, :], D, axis=1)
        x = logit_beta(a, cfg.conc_d - a, rng)
        log_rates = np.log(rng.gamma(cfg.shape, size=x.shape)) + x
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            total = np.exp(log_rates).sum(axis=2)
            log_acc = np.sum(n * np.log(total) - total, axis=1) - D * log_max
        hit = np.flatnonzero(np.log(rng.random(batch)) < log_acc)
        if len(hit):
            i = hit[0]
            break
    else:
        raise RuntimeError("forward sampler failed to condition on document lengths")
    topics = [robust_dirichlet(np.full((K, model.vocab), cfg.eta), rng)]
    state = HbnbpState(shared[i], x[i], log_rates[i], np.zeros(D * n, dtype=np.int64), topics,
                       np.full(D, cfg.shape), None if rounds is None else rounds[i])
    data = resample_data(state, model, rng)
    return state, data


def resample_data(state: HbnbpState, model: MicroModel, rng) -> TokenData:
    """Assignments iid proportional to the rates, then words given topics."""
    doc = _token_docs(model)
    p = special.softmax(state.log_rates, axis=1)
    cum = np.cumsum(p, axis=1)[doc]
    z = np.minimum((rng.random(len(doc))[:, None] > cum).sum(axis=1), model.K - 1)
    phi = state.topics[0][z]
    words = np.minimum((rng.random(len(doc))[:, None] > np.cumsum(phi, axis=1)).sum(axis=1), model.vocab - 1)
    state.assign = z
    return TokenData(doc, words, (model.vocab,), model.n_docs)


def statistics(state: HbnbpState, data: TokenData, model: MicroModel) -> Dict[str, float]:
    n = count_matrix(data, state.assign, state.K).sum(axis=0)
    p = n / n.sum()
    out = {
        "mean_shared": float(state.shared.mean()),
        "mean_rate": float(state.rates.mean()),
        "usage_entropy": float(-np.sum(special.xlogy(p, p))),
        "mean_doc_weight": float(state.doc_weights.mean()),
        "topic_word0": float(state.topics[0][:, 0].mean()),
        "word0_share": float(np.mean(data.words[:, 0] == 0)),
    }
    if model.mode == "exact":
        out["mean_round"] = float(np.mean(state.rounds))
    return out


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean of a correlated series."""
    x = np.asarray(x, dtype=float)
    size = len(x) // n_batches
    if size < 2:
        return float(x.std(ddof=1) / math.sqrt(len(x)))
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class GewekeResult:
    z_scores: Dict[str, float]
    forward_means: Dict[str, float] = field(default_factory=dict)
    chain_means: Dict[str, float] = field(default_factory=dict)

    @property
    def max_abs_z(self) -> float:
        return max(abs(v) for v in self.z_scores.values())


def geweke_test(model: MicroModel, n_rounds: int = 10_000, seed: int = 0) -> GewekeResult:
    """First and second moments of each statistic, forward versus chain."""
    cfg = model.config()
    ss_f, ss_c = np.random.SeedSequence(seed).spawn(2)
    rng_f, rng_c = np.random.default_rng(ss_f), np.random.default_rng(ss_c)
    forward: List[Dict[str, float]] = []
    for _ in range(n_rounds):
        s, d = forward_sample(model, rng_f)
        forward.append(statistics(s, d, model))
    state, data = forward_sample(model, rng_c)
    chain: List[Dict[str, float]] = []
    for _ in range(n_rounds):
        gibbs_sweep(state, data, cfg, rng_c)
        data = resample_data(state, model, rng_c)
        chain.append(statistics(state, data, model))
    z, fm, cm = {}, {}, {}
    for key in forward[0]:
        f = np.array([s[key] for s in forward])
        c = np.array([s[key] for s in chain])
        for power, label in ((1, key), (2, key + "^2")):
            fp, cp = f ** power, c ** power
            se = math.sqrt(fp.var(ddof=1) / len(fp) + batch_means_se(cp) ** 2)
            z[label] = float((fp.mean() - cp.mean()) / se) if se > 0 else 0.0
            fm[label], cm[label] = float(fp.mean()), float(cp.mean())
    return GewekeResult(z, fm, cm)
