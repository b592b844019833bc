import itertools
from collections import Counter
import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from bnbp.errors import DomainError, ParameterError
from bnbp.inference import kernels as kn
from bnbp.inference import rounds as rd
from bnbp.inference import store as st
from bnbp.inference.config import SamplerConfig, heuristic_shape
from bnbp.inference.geweke import batch_means_se
from bnbp.inference.predictive import PosteriorSample, predictive_loglik, score_documents
from bnbp.inference.runner import run_chain
from bnbp.inference.state import HbnbpState, TokenData, check_invariants
from bnbp.inference.toybars import bar_topics, make_toy_bars, match_topics


def logit(p):
    return math.log(p) - math.log1p(-p)


def make_state(shared, data, shape, V=None, rounds=None, logit_b=0.0):
    K, D = len(shared), data.n_docs
    V = V or data.vocab_sizes[0]
    return HbnbpState(np.asarray(shared, dtype=float), np.full((D, K), logit_b), np.zeros((D, K)),
                      np.zeros(data.n_tokens, dtype=np.int64), [np.full((K, V), 1.0 / V)],
                      np.full(D, float(shape)), None if rounds is None else np.asarray(rounds))


# ---------------------------------------------------------------------------
# configuration


def test_heuristic_shape():
    assert heuristic_shape(90, 3, 3) == pytest.approx(20)
    assert heuristic_shape(90, 3, 1 + 1e-9) < 1e-6
    with pytest.raises(ParameterError):
        heuristic_shape(0, 3, 3)
    with pytest.raises(ParameterError):
        heuristic_shape(10, 3, 1)


def test_config_validation_and_text():
    cfg = SamplerConfig(mode="finite", n_components=50, seed=4)
    assert SamplerConfig.from_text(cfg.to_text()) == cfg
    assert SamplerConfig.from_text("eta = 0.5\n# note\n", seed=9).seed == 9
    with pytest.raises(ParameterError):
        SamplerConfig(mode="fast")
    with pytest.raises(ParameterError):
        SamplerConfig(zeta_base=1.0)
    with pytest.raises(ParameterError):
        SamplerConfig.from_text("bogus = 1")
    assert SamplerConfig(iterations=100).effective_burn_in == 20


def test_slice_bounds():
    cfg = SamplerConfig()
    assert float(cfg.zeta(0)) == pytest.approx(2 / 3)
    z = np.zeros(1000, dtype=np.int64)
    data = TokenData(np.zeros(1000, dtype=np.int64), np.zeros(1000, dtype=np.int64), (2,), 1)
    state = make_state([0.5], data, 1.0, rounds=[0])
    state.assign = z
    kn.sample_token_slices(state, data, cfg, np.random.default_rng(0))
    assert np.all((state.token_slice > 0) & (state.token_slice < 2 / 3))
    for u in (0.5, 0.1, 1e-3, 1e-9):
        K = kn.required_components(np.array([u]), cfg)
        assert K == math.floor(-math.log(u) / math.log(1.5))
        assert cfg.zeta(K - 1) >= u > cfg.zeta(K)


# ---------------------------------------------------------------------------
# conjugate kernels


def test_doc_weight_conditional():
    # mass_d=1, conc_d=10, b0=0.5, n=2, r=5 -> Beta(7, 10)
    D = 20_000
    data = TokenData.from_counts([{0: 2}] * D, 2)
    cfg = SamplerConfig(mass_d=1, conc_d=10, shape=5)
    state = make_state([0.5], data, 5)
    kn.sample_doc_weights(state, data, cfg, np.random.default_rng(1))
    assert stats.kstest(state.doc_weights[:, 0], stats.beta(7, 10).cdf).pvalue > 1e-3
    # rates given weights: Gamma(r + n, scale b), so rate / b has mean r + n
    kn.sample_rates(state, data, cfg, np.random.default_rng(2))
    x = state.rates[:, 0] / state.doc_weights[:, 0]
    assert abs(x.mean() - 7) < 4 * x.std() / math.sqrt(D)


def test_doc_weight_posterior_mean_increases():
    cfg = SamplerConfig(shape=1)
    means = []
    for n in (0, 3, 10):
        data = TokenData.from_counts([{0: max(n, 1)}] * 5000, 1)
        state = make_state([0.4, 0.4], data, 1)
        if n == 0:
            state.assign[:] = 1          # every token on the other component
        kn.sample_doc_weights(state, data, cfg, np.random.default_rng(n))
        means.append(state.doc_weights[:, 0].mean())
    assert means[0] < means[1] < means[2]


def test_topic_conditional():
    data = TokenData(np.zeros(3, dtype=np.int64), np.array([0, 0, 2]), (3,), 1)
    cfg = SamplerConfig(eta=0.1)
    state = make_state([0.5], data, 1)
    rng = np.random.default_rng(3)
    draws = []
    for _ in range(5000):
        kn.sample_topics(state, data, cfg, rng)
        draws.append(state.topics[0][0])
    draws = np.array(draws)
    alpha = np.array([2.1, 0.1, 1.1])
    se = np.sqrt(stats.dirichlet.var(alpha) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - alpha / alpha.sum()) < 4 * se)


def test_assignment_kernel_brute_force():
    # one token, four components: the slice step followed by the sliced
    # assignment draw must leave p(z = k) proportional to rate_k F_k invariant
    cfg = SamplerConfig()
    data = TokenData(np.zeros(1, dtype=np.int64), np.array([1]), (3,), 1)
    K = 4
    rng = np.random.default_rng(4)
    state = make_state(rng.random(K) * 0.5, data, 1.0, rounds=np.zeros(K, dtype=int))
    state.log_rates = np.log(rng.gamma(2.0, size=(1, K)))
    state.topics = [rng.dirichlet(np.ones(3), size=K)]
    weight = state.rates[0] * state.topics[0][:, 1]
    target = weight / weight.sum()
    zeta = cfg.zeta(np.arange(K))
    edges = np.append(zeta, 0.0)
    T = np.zeros((K, K))
    for j in range(K):                        # u in (zeta_{j+1}, zeta_j]
        state.token_slice = np.array([0.5 * (edges[j] + edges[j + 1])])
        logp = kn.assignment_logits(state, data, cfg)[0]
        p = np.exp(logp - logp.max())
        p /= p.sum()
        # hand-written sliced conditional
        hand = np.where(np.arange(K) <= j, weight / zeta, 0.0)
        np.testing.assert_allclose(p, hand / hand.sum(), rtol=1e-12)
        for i in range(j + 1):
            T[i] += (edges[j] - edges[j + 1]) / zeta[i] * p
    np.testing.assert_allclose(T.sum(axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(target @ T, target, rtol=1e-12)


def test_single_active_component_is_deterministic():
    cfg = SamplerConfig()
    data = TokenData(np.zeros(50, dtype=np.int64), np.zeros(50, dtype=np.int64), (2,), 1)
    state = make_state([0.5, 0.5, 0.5], data, 1.0, rounds=[0, 0, 0])
    state.token_slice = np.full(50, 0.5)         # only zeta_1 = 2/3 exceeds 0.5
    kn.sample_assignments(state, data, cfg, np.random.default_rng(5))
    assert np.all(state.assign == 0)


# ---------------------------------------------------------------------------
# top-level weights


def _run_shared_chain(cfg, data, state, n_steps, rng, refresh_doc=False):
    out = np.empty(n_steps)
    for i in range(n_steps):
        if refresh_doc:
            kn.sample_doc_weights(state, data, cfg, rng)
        kn.sample_shared_weights(state, data, cfg, rng)
        out[i] = state.shared[0]
    return out


def _quad_mean(logdens):
    z = integrate.quad(lambda b: math.exp(logdens(b)), 0, 1, limit=200, epsabs=0)[0]
    m = integrate.quad(lambda b: b * math.exp(logdens(b)), 0, 1, limit=200, epsabs=0)[0]
    return m / z


def test_shared_weight_prior_only():
    # no documents: the stationary law is Beta(1, conc0 + m)
    data = TokenData(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), (2,), 0)
    cfg = SamplerConfig(mass0=3, conc0=3, shape=1)
    state = make_state([0.2], data, 1, rounds=[2])
    x = _run_shared_chain(cfg, data, state, 40_000, np.random.default_rng(6))
    assert abs(x.mean() - 1 / 6) < 4 * batch_means_se(x)


def test_shared_weight_matches_quadrature():
    # one component, one document with two tokens, shape 1, rounds m = 0
    data = TokenData(np.zeros(2, dtype=np.int64), np.zeros(2, dtype=np.int64), (2,), 1)
    cfg = SamplerConfig(mass0=3, conc0=3, mass_d=1, conc_d=10, shape=1.0)
    bd = 0.3

    def uncollapsed(b):
        return 2 * math.log1p(-b) + stats.beta.logpdf(bd, 10 * b, 10 * (1 - b))

    def collapsed(b):
        return 2 * math.log1p(-b) + special.betaln(10 * b + 2, 10 * (1 - b) + 1) - special.betaln(10 * b, 10 * (1 - b))

    rng = np.random.default_rng(7)
    state = make_state([0.3], data, 1.0, rounds=[0], logit_b=logit(bd))
    x = _run_shared_chain(cfg, data, state, 30_000, rng)
    assert abs(x.mean() - _quad_mean(uncollapsed)) < 1e-2
    truth = _quad_mean(collapsed)
    state = make_state([0.3], data, 1.0, rounds=[0])
    x_c = _run_shared_chain(cfg.replace(collapsed=True), data, state, 30_000, rng)
    state = make_state([0.3], data, 1.0, rounds=[0])
    x_u = _run_shared_chain(cfg, data, state, 30_000, rng, refresh_doc=True)
    assert abs(x_c.mean() - truth) < 1e-2
    assert abs(x_u.mean() - truth) < 1e-2
    assert abs(x_c.mean() - x_u.mean()) < 4 * math.hypot(batch_means_se(x_c), batch_means_se(x_u))


def test_finite_prior_total_weight():
    rng = np.random.default_rng(8)
    for K in (10, 100, 1000):
        cfg = SamplerConfig(mode="finite", n_components=K)
        tot = np.array([kn.prior_shared(K, cfg, rng).sum() for _ in range(2000)])
        assert abs(tot.mean() - 3.0) < 4 * tot.std(ddof=1) / math.sqrt(len(tot))


# ---------------------------------------------------------------------------
# rounds


def test_first_gap_probability():
    assert math.exp(rd.log_round_prior(np.array([0]), 3, 3)) == pytest.approx(-math.expm1(-3.0))
    rng = np.random.default_rng(9)
    first = np.array([rd.sample_next_round(np.zeros(0, dtype=int), 3, 3, rng) for _ in range(20_000)])
    p = -math.expm1(-3.0)
    assert abs(np.mean(first == 0) - p) < 4 * math.sqrt(p * (1 - p) / len(first))
    assert first.min() >= 0


def test_round_prior_matches_forward_simulation():
    rng = np.random.default_rng(10)
    n = 20_000
    seqs = [tuple(rd.sample_round_sequence(3, 3, 3, rng)) for _ in range(n)]
    seq2 = []
    for _ in range(n):
        m = np.zeros(0, dtype=np.int64)
        for _ in range(3):
            m = np.append(m, rd.sample_next_round(m, 3, 3, rng))
        seq2.append(tuple(m))
    total = 0.0
    tallies = [Counter(seqs), Counter(seq2)]
    for s in itertools.combinations_with_replacement(range(40), 3):
        p = math.exp(rd.log_round_prior(np.array(s), 3, 3))
        total += p
        if p > 0.01:
            for tally in tallies:
                freq = tally[s] / n
                assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_round_prior_gaps_vectorized():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = rd.sample_round_sequence(int(rng.integers(1, 8)), 3, 3, rng)
        k = int(rng.integers(len(m)))
        prev = m[k - 1] if k else 0
        gaps = np.arange(8)
        fast = rd.log_round_prior_gaps(m, k, gaps, 3, 3)
        for g, f in zip(gaps, fast):
            mm = m.copy()
            mm[k:] += prev + g - m[k]
            assert f == pytest.approx(rd.log_round_prior(mm, 3, 3), abs=1e-10)


def test_prior_only_round_chain():
    # weights and rounds updated with no data: round labels keep their prior law
    K = 4
    data = TokenData(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), (2,), 0)
    cfg = SamplerConfig(mass0=3, conc0=3, shape=1)
    rng = np.random.default_rng(12)
    m0 = rd.sample_round_sequence(K, 3, 3, rng)
    state = make_state(rng.beta(1, 3 + m0), data, 1, rounds=m0)
    n = 8000
    chain = np.empty((n, K))
    for i in range(n):
        kn.sample_shared_weights(state, data, cfg, rng)
        kn.sample_rounds(state, cfg, rng)
        chain[i] = state.rounds
    fwd = np.array([rd.sample_round_sequence(K, 3, 3, rng) for _ in range(n)], dtype=float)
    for k in range(K):
        se = math.hypot(batch_means_se(chain[:, k]), fwd[:, k].std() / math.sqrt(n))
        assert abs(chain[:, k].mean() - fwd[:, k].mean()) < 4 * se
    occ0 = np.sum(chain == 0, axis=1)
    occ0_f = np.sum(fwd == 0, axis=1)
    assert abs(occ0.mean() - occ0_f.mean()) < 4 * math.hypot(batch_means_se(occ0), occ0_f.std() / math.sqrt(n))


# ---------------------------------------------------------------------------
# sweeps and chains


@pytest.fixture(scope="module")
def bars():
    corpus, topics = make_toy_bars(seed=0, n_docs=12, doc_len=30)
    return corpus.to_tokens(), topics


@pytest.mark.parametrize("mode", ["exact", "finite"])
@pytest.mark.parametrize("collapsed", [False, True])
def test_sweeps_keep_invariants(bars, mode, collapsed):
    data, _ = bars
    cfg = SamplerConfig(mode=mode, n_components=20, collapsed=collapsed, seed=1)
    rng = np.random.default_rng(cfg.seed)
    state = kn.init_state(data, cfg, rng)
    for _ in range(15):
        kn.gibbs_sweep(state, data, cfg, rng)
        check_invariants(state, data, cfg)
        assert np.isfinite(kn.log_joint(state, data, cfg))
    if mode == "exact":
        assert state.K >= kn.required_components(state.token_slice, cfg)


def test_sweep_deterministic(bars):
    data, _ = bars
    cfg = SamplerConfig(iterations=5, seed=3)
    a = run_chain(data, cfg)
    b = run_chain(data, cfg)
    assert a.trace == b.trace
    np.testing.assert_array_equal(a.state.shared, b.state.shared)


def test_one_document_corpus():
    data = TokenData.from_counts([{0: 3, 4: 2}], 5)
    for mode in ("exact", "finite"):
        res = run_chain(data, SamplerConfig(mode=mode, iterations=5, n_components=10))
        assert len(res.trace) == 5


def test_used_components():
    b = np.array([0.5, 0.02, 0.001])
    assert kn.used_components(b, 0) == 3
    assert kn.used_components(b, 1) == 0
    assert kn.used_components(b) == 2


def test_store_and_resume(bars, tmp_path):
    data, _ = bars
    cfg = SamplerConfig(iterations=8, burn_in=2, seed=5)
    full = run_chain(data, cfg, store_path=tmp_path / "a.ndjson", trace_path=tmp_path / "a.csv",
                     checkpoint_path=tmp_path / "a.npz", checkpoint_every=4)
    part = run_chain(data, cfg.replace(iterations=4), store_path=tmp_path / "b.ndjson",
                     trace_path=tmp_path / "b.csv", checkpoint_path=tmp_path / "b.npz", checkpoint_every=4)
    assert part.state.iteration == 4
    rest = run_chain(data, cfg, store_path=tmp_path / "b.ndjson", trace_path=tmp_path / "b.csv",
                     checkpoint_path=tmp_path / "b.npz", checkpoint_every=4, resume=True)
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    # headers differ in the configured iteration count only
    assert (tmp_path / "a.ndjson").read_text().splitlines()[1:] == (tmp_path / "b.ndjson").read_text().splitlines()[1:]
    header, samples = st.load_store(tmp_path / "a.ndjson")
    assert header["n_docs"] == data.n_docs and len(samples) == 6
    np.testing.assert_allclose(samples[-1].shared, full.state.shared)
    np.testing.assert_allclose(samples[-1].topics[0], full.state.topics[0], atol=0)
    assert len(rest.samples) == 6


# ---------------------------------------------------------------------------
# held-out likelihood


def _two_models():
    tA = np.zeros((2, 10))
    tA[:, :5] = 0.2
    tB = np.zeros((2, 10))
    tB[:, 5:] = 0.2
    shared = np.array([0.4, 0.3])
    return [PosteriorSample(0, shared, [tA])], [PosteriorSample(0, shared, [tB])]


def test_predictive_separates_disjoint_models():
    A, B = _two_models()
    rng = np.random.default_rng(13)
    doc = rng.integers(0, 5, size=(12, 1))
    assert predictive_loglik(A, doc, 2.0, 1, 10, 100, rng) > predictive_loglik(B, doc, 2.0, 1, 10, 100, rng)


def test_predictive_inner_draws_consistent():
    A, _ = _two_models()
    doc = np.array([[0], [1], [1], [3]])
    e1, s1 = predictive_loglik(A * 400, doc, 2.0, 1, 10, 1, np.random.default_rng(14), return_se=True)
    e2, s2 = predictive_loglik(A * 4, doc, 2.0, 1, 10, 100, np.random.default_rng(15), return_se=True)
    assert abs(e1 - e2) < 4 * math.hypot(s1, s2)


def test_predictive_longer_document_less_likely():
    A, _ = _two_models()
    doc = np.array([[0], [1], [2], [2], [4]])
    one = predictive_loglik(A, doc, 2.0, 1, 10, 500, np.random.default_rng(16))
    two = predictive_loglik(A, np.vstack([doc, doc]), 2.0, 1, 10, 500, np.random.default_rng(16))
    assert two < one


def test_predictive_errors_and_workers():
    A, _ = _two_models()
    with pytest.raises(DomainError):
        predictive_loglik(A, np.zeros((0, 1), dtype=int), 2.0, 1, 10)
    docs = [np.array([[0], [1]]), np.array([[2]])]
    np.testing.assert_array_equal(score_documents(A, docs, 2.0, 1, 10, seed=1),
                                  score_documents(A, docs, 2.0, 1, 10, seed=1, workers=2))


# ---------------------------------------------------------------------------
# toy bars fixture


def test_toy_bars_fixture():
    corpus, topics = make_toy_bars(seed=0)
    assert len(corpus.docs) == 50 and corpus.vocab_size == 25 and topics.shape == (10, 25)
    assert all(d.length == 100 for d in corpus.docs)
    again, _ = make_toy_bars(seed=0)
    assert again.to_text() == corpus.to_text()
    np.testing.assert_allclose(bar_topics().sum(axis=1), 1.0)


def test_match_topics_recovers_permutation():
    t = bar_topics()
    perm = np.random.default_rng(17).permutation(10)
    rows, cols, dist = match_topics(t[perm], t)
    assert np.all(dist == 0)
    assert np.array_equal(perm[rows], cols)
