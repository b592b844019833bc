"""Gibbs kernels for the hierarchical BNBP admixture.

Exact mode uses the size-biased representation of the top-level beta process
with slice variables on token assignments and on component rounds; finite mode
uses ``K`` independent ``Beta(conc0 mass0 / K, conc0 (1 - mass0 / K))`` weights.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special, stats

from ..errors import NumericError
from .config import SamplerConfig
from .rounds import MAX_GAP, log_round_prior, log_round_prior_gaps, sample_next_round, sample_round_sequence
from .state import WEIGHT_FLOOR, HbnbpState, TokenData, count_matrix, resolve_shapes

log = logging.getLogger(__name__)

_LOGIT_MAX = math.log((1 - WEIGHT_FLOOR) / WEIGHT_FLOOR)


# ---------------------------------------------------------------------------
# robust variates


def log_gamma_variates(shape, rng) -> np.ndarray:
    """``log G`` for ``G ~ Gamma(shape, 1)``, accurate for tiny shapes via
    ``G = G' U^{1/shape}`` with ``G' ~ Gamma(shape + 1)``."""
    shape = np.asarray(shape, dtype=float)
    small = shape < 1
    out = np.log(rng.gamma(np.where(small, shape + 1.0, shape)))
    if np.any(small):
        with np.errstate(divide="ignore"):
            out = np.where(small, out + np.log(rng.random(shape.shape)) / shape, out)
    return out


def logit_beta(a, c, rng) -> np.ndarray:
    """``logit B`` for ``B ~ Beta(a, c)``, without underflow for tiny ``a``."""
    a, c = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(c, dtype=float))
    return log_gamma_variates(a, rng) - log_gamma_variates(c, rng)


def robust_beta(a, c, rng) -> np.ndarray:
    """Beta draws clamped to ``[WEIGHT_FLOOR, 1 - WEIGHT_FLOOR]``."""
    return np.clip(special.expit(logit_beta(a, c, rng)), WEIGHT_FLOOR, 1 - WEIGHT_FLOOR)


def log_rate_variates(shapes, n, doc_logit, rng) -> np.ndarray:
    """``log rate`` for ``rate ~ Gamma(r + n, scale b)`` given ``logit b``."""
    return log_gamma_variates(shapes[:, None] + n, rng) + special.log_expit(doc_logit)


def robust_dirichlet(alpha, rng) -> np.ndarray:
    """Row-wise Dirichlet draws for a 2-d parameter array."""
    lg = log_gamma_variates(alpha, rng)
    lg -= lg.max(axis=-1, keepdims=True)
    p = np.exp(lg)
    return p / p.sum(axis=-1, keepdims=True)


def _doc_beta_params(shared, cfg: SamplerConfig):
    a = cfg.mass_d * cfg.conc_d * shared
    return a, cfg.conc_d - a


# ---------------------------------------------------------------------------
# initialization and representation growth


def prior_shared(K: int, cfg: SamplerConfig, rng, rounds=None) -> np.ndarray:
    if cfg.mode == "exact":
        b = robust_beta(1.0, cfg.conc0 + np.asarray(rounds, dtype=float), rng)
    else:
        b = robust_beta(np.full(K, cfg.conc0 * cfg.mass0 / K), np.full(K, cfg.conc0 * (1 - cfg.mass0 / K)), rng)
    return np.minimum(b, (1 - WEIGHT_FLOOR) / max(cfg.mass_d, 1.0))


def init_state(data: TokenData, cfg: SamplerConfig, rng) -> HbnbpState:
    shapes = resolve_shapes(data, cfg)
    if cfg.mode == "exact":
        K = cfg.init_components
        rounds = sample_round_sequence(K, cfg.mass0, cfg.conc0, rng)
    else:
        K, rounds = cfg.n_components, None
    shared = prior_shared(K, cfg, rng, rounds)
    a, c = _doc_beta_params(shared, cfg)
    doc_logit = logit_beta(np.broadcast_to(a, (data.n_docs, K)), np.broadcast_to(c, (data.n_docs, K)), rng)
    topics = [robust_dirichlet(np.full((K, V), cfg.eta), rng) for V in data.vocab_sizes]
    assign = rng.integers(min(K, cfg.init_active), size=data.n_tokens)
    n = count_matrix(data, assign, K)
    log_rates = log_rate_variates(shapes, n, doc_logit, rng)
    return HbnbpState(shared, doc_logit, log_rates, assign, topics, shapes, rounds)


def _append_empty_component(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng,
                            max_tries: int = 100_000) -> None:
    """Instantiate the next component from its conditional given that no
    token uses it: (round, shared weight) from the prior, accepted with
    probability ``prod_d P(n_dk = 0 | shared weight)``."""
    r = state.shapes
    for _ in range(max_tries):
        m = sample_next_round(state.rounds, cfg.mass0, cfg.conc0, rng)
        b0 = float(robust_beta(1.0, cfg.conc0 + m, rng))
        a, c = _doc_beta_params(b0, cfg)
        if c <= 0:
            continue
        log_acc = float(np.sum(special.betaln(a, c + r) - special.betaln(a, c)))
        if math.log(rng.random()) < log_acc:
            break
    else:
        raise NumericError("could not instantiate an empty component")
    xd = logit_beta(np.full(data.n_docs, a), c + r, rng)
    state.shared = np.append(state.shared, b0)
    state.rounds = np.append(state.rounds, m)
    state.doc_logit = np.column_stack([state.doc_logit, xd])
    state.log_rates = np.column_stack([state.log_rates, log_rate_variates(r, 0, xd[:, None], rng)])
    state.topics = [np.vstack([t, robust_dirichlet(np.full((1, t.shape[1]), cfg.eta), rng)])
                    for t in state.topics]
    if state.round_slice is not None:
        state.round_slice = np.append(state.round_slice, np.nan)


def required_components(token_slice: np.ndarray, cfg: SamplerConfig) -> int:
    """Smallest ``K`` such that every component with level ``>= u`` is below ``K``."""
    if len(token_slice) == 0:
        return 0
    u = float(token_slice.min())
    K = int(math.floor(-math.log(u) / math.log(cfg.zeta_base)))
    while cfg.zeta(K) >= u:
        K += 1
    while K > 0 and cfg.zeta(K - 1) < u:
        K -= 1
    return K


def grow_representation(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    need = required_components(state.token_slice, cfg)
    if need > cfg.max_components:
        state.stats["capped"] += 1
        log.warning("slice asks for %d components; capped at %d", need, cfg.max_components)
        need = cfg.max_components
    while state.K < need:
        _append_empty_component(state, data, cfg, rng)


# ---------------------------------------------------------------------------
# kernels


def sample_token_slices(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    """``u ~ Uniform(0, zeta_z)`` for every token."""
    state.token_slice = rng.random(data.n_tokens) * cfg.zeta(state.assign)


def sample_rates(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    """Gamma auxiliaries: shape ``r + n``, scale ``b`` (rate ``1/b``)."""
    n = count_matrix(data, state.assign, state.K)
    state.log_rates = log_rate_variates(state.shapes, n, state.doc_logit, rng)


def assignment_logits(state: HbnbpState, data: TokenData, cfg: SamplerConfig) -> np.ndarray:
    """Unnormalized log conditional of every token's component, ``(T, K)``."""
    K = state.K
    with np.errstate(divide="ignore"):
        logp = state.log_rates[data.doc]
        for f, t in enumerate(state.topics):
            logp += np.log(t[:, data.words[:, f]].T)
    if cfg.mode == "exact" and state.token_slice is not None:
        zeta = cfg.zeta(np.arange(K))
        logp -= np.log(zeta)
        logp[zeta[None, :] < state.token_slice[:, None]] = -np.inf
    return logp


def sample_assignments(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    logp = assignment_logits(state, data, cfg)
    z = np.argmax(logp + rng.gumbel(size=logp.shape), axis=1)
    dead = ~np.isfinite(logp.max(axis=1))
    if np.any(dead):
        z[dead] = state.assign[dead]
    state.assign = z


def sample_doc_weights(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    """Beta-negative binomial conjugate draw of every ``b_dk`` with the rates
    integrated out, followed by the rates given the new weights (a block
    update of both)."""
    n = count_matrix(data, state.assign, state.K)
    a, c = _doc_beta_params(state.shared, cfg)
    state.doc_logit = logit_beta(a[None, :] + n, c[None, :] + state.shapes[:, None], rng)
    state.log_rates = log_rate_variates(state.shapes, n, state.doc_logit, rng)


def sample_topics(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    K = state.K
    out = []
    for f, V in enumerate(data.vocab_sizes):
        counts = np.bincount(state.assign * V + data.words[:, f], minlength=K * V).reshape(K, V)
        out.append(robust_dirichlet(cfg.eta + counts, rng))
    state.topics = out


def shared_log_target(b0: np.ndarray, state: HbnbpState, n: np.ndarray, cfg: SamplerConfig) -> np.ndarray:
    """Log conditional density of each top-level weight (up to constants)."""
    b0 = np.asarray(b0, dtype=float)
    K = state.K
    if cfg.mode == "exact":
        prior = (cfg.conc0 + state.rounds - 1) * np.log1p(-b0)
    else:
        a0, c0 = cfg.conc0 * cfg.mass0 / K, cfg.conc0 * (1 - cfg.mass0 / K)
        prior = (a0 - 1) * np.log(b0) + (c0 - 1) * np.log1p(-b0)
    a, c = _doc_beta_params(b0, cfg)
    ok = c > 0
    a = np.where(ok, a, 0.5)
    c = np.where(ok, c, 0.5)
    if cfg.collapsed:
        r = state.shapes[:, None]
        lik = np.sum(special.gammaln(n + a) + special.gammaln(r + c)
                     - special.gammaln(a) - special.gammaln(c), axis=0)
    else:
        D = state.doc_logit.shape[0]
        lik = a * state.doc_logit.sum(axis=0) - D * (special.gammaln(a) + special.gammaln(c))
    return np.where(ok, prior + lik, -np.inf)


def sample_shared_weights(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> None:
    """One random-walk Metropolis-Hastings step on ``logit(b0_k)`` for every
    component (the conditionals factor over ``k``). In collapsed mode the
    per-document weights and rates are then redrawn given the new values."""
    n = count_matrix(data, state.assign, state.K)
    b = state.shared
    y = np.log(b) - np.log1p(-b)
    y_new = y + cfg.mh_step * rng.standard_normal(len(y))
    inside = np.abs(y_new) <= _LOGIT_MAX
    b_new = special.expit(np.clip(y_new, -_LOGIT_MAX, _LOGIT_MAX))
    # target in logit coordinates carries the Jacobian b (1 - b)
    with np.errstate(invalid="ignore"):
        log_ratio = (shared_log_target(b_new, state, n, cfg) + np.log(b_new) + np.log1p(-b_new)
                     - shared_log_target(b, state, n, cfg) - np.log(b) - np.log1p(-b))
    nan = np.isnan(log_ratio)
    if np.any(nan):
        state.stats["mh_nan"] += int(nan.sum())
        log.warning("NaN acceptance ratio for %d components; rejected", int(nan.sum()))
    accept = inside & ~nan & (np.log(rng.random(len(y))) < np.where(nan, -np.inf, log_ratio))
    state.shared = np.where(accept, b_new, b)
    state.stats["mh_accept"] += int(accept.sum())
    state.stats["mh_total"] += len(y)
    if cfg.collapsed:
        sample_doc_weights(state, data, cfg, rng)


def _rounds_tail_terms(rounds_tail, shift, log1m_b, conc0):
    """Sum over components ``j >= k`` of ``log Beta(b0_j; 1, conc0 + m_j + shift)``
    for a vector of shifts."""
    m = rounds_tail[None, :] + shift[:, None]
    return np.sum(np.log(conc0 + m) + (conc0 + m - 1) * log1m_b[None, :], axis=1)


def sample_rounds(state: HbnbpState, cfg: SamplerConfig, rng) -> None:
    """Slice-within-Gibbs update of every round gap.

    With ``h(g) = zeta0_g (1 - b0_k)^g``, draw ``v ~ Uniform(0, h(g_k))`` and
    then ``g_k`` from its conditional restricted to ``{g : h(g) >= v}`` and
    divided by ``h(g)``. Moving ``g_k`` shifts the rounds of every later
    component, so the conditional uses the round prior of the whole sequence
    and the weight densities of components ``j >= k``.
    """
    m = state.rounds.copy()
    b0 = state.shared
    log1m_b = np.log1p(-b0)
    log_base0 = math.log(cfg.zeta0_base)
    K = len(m)
    v = np.empty(K)
    for k in range(K):
        prev = m[k - 1] if k else 0
        g_cur = int(m[k] - prev)
        rate = log1m_b[k] - log_base0          # log h(g) = g * rate, rate < 0
        log_v = g_cur * rate + math.log(max(rng.random(), 1e-300))
        v[k] = math.exp(log_v)
        g_max = min(int(math.floor(log_v / rate)), g_cur + MAX_GAP)
        g_max = max(g_max, g_cur)
        cand = np.arange(g_max + 1)
        shift = cand - g_cur
        lt = _rounds_tail_terms(m[k:], shift, log1m_b[k:], cfg.conc0) - cand * rate
        lt += log_round_prior_gaps(m, k, cand, cfg.mass0, cfg.conc0)
        lt -= lt.max()
        p = np.exp(lt)
        g_new = int(rng.choice(len(cand), p=p / p.sum()))
        m[k:] += g_new - g_cur
    state.rounds = m
    state.round_slice = v


def gibbs_sweep(state: HbnbpState, data: TokenData, cfg: SamplerConfig, rng) -> HbnbpState:
    """One scan: slices, growth, rates, assignments, per-document weights,
    topics, top-level weights and (exact mode) rounds."""
    exact = cfg.mode == "exact"
    if exact:
        sample_token_slices(state, data, cfg, rng)
        if cfg.grow:
            grow_representation(state, data, cfg, rng)
    sample_rates(state, data, cfg, rng)
    sample_assignments(state, data, cfg, rng)
    sample_doc_weights(state, data, cfg, rng)
    sample_topics(state, data, cfg, rng)
    sample_shared_weights(state, data, cfg, rng)
    if exact:
        sample_rounds(state, cfg, rng)
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# summaries


def used_components(shared, threshold: float = 0.01) -> int:
    return int(np.sum(np.asarray(shared) > threshold))


def log_joint(state: HbnbpState, data: TokenData, cfg: SamplerConfig) -> float:
    """Log joint density of the state and the tokens (slice variables excluded)."""
    K = state.K
    n = count_matrix(data, state.assign, K)
    b0 = state.shared
    if cfg.mode == "exact":
        lp = log_round_prior(state.rounds, cfg.mass0, cfg.conc0)
        lp += float(np.sum(stats.beta.logpdf(b0, 1.0, cfg.conc0 + state.rounds)))
    else:
        lp = float(np.sum(stats.beta.logpdf(b0, cfg.conc0 * cfg.mass0 / K, cfg.conc0 * (1 - cfg.mass0 / K))))
    a, c = _doc_beta_params(b0, cfg)
    x = state.doc_logit
    log_b, log_1mb = special.log_expit(x), special.log_expit(-x)
    lp += float(np.sum((a - 1) * log_b + (c - 1) * log_1mb - special.betaln(a, c)))
    # rates ~ Gamma(r, scale b / (1 - b)); the log scale of that is the logit
    r = state.shapes[:, None]
    lr = state.log_rates
    lam = np.exp(lr)
    lp += float(np.sum((r - 1) * lr - np.exp(lr - x) - r * x - special.gammaln(r)))
    # assignment sequence given rates: prod_k Pois(n_k; rate_k) * prod_k n_k! / N!
    lp += float(np.sum(np.where(n > 0, n * lr, 0.0) - lam))
    lp -= float(np.sum(special.gammaln(data.doc_lengths + 1)))
    for f, t in enumerate(state.topics):
        lp += float(np.sum(special.gammaln(cfg.eta * t.shape[1]) - t.shape[1] * special.gammaln(cfg.eta)
                           + (cfg.eta - 1) * np.log(t).sum(axis=1)))
        lp += float(np.sum(np.log(t[state.assign, data.words[:, f]])))
    return lp
