"""Token-level data and the sampler state for the hierarchical BNBP admixture."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import special

from ..errors import DomainError
from .config import SamplerConfig, heuristic_shape

WEIGHT_FLOOR = 1e-12


@dataclass
class TokenData:
    """Documents flattened to tokens.

    ``words`` has one column per observation field (a single column for
    plain bag-of-words data).
    """

    doc: np.ndarray
    words: np.ndarray
    vocab_sizes: tuple
    n_docs: int

    def __post_init__(self):
        self.doc = np.asarray(self.doc, dtype=np.int64)
        self.words = np.asarray(self.words, dtype=np.int64)
        if self.words.ndim == 1:
            self.words = self.words[:, None]
        self.vocab_sizes = tuple(int(v) for v in self.vocab_sizes)
        if self.words.shape != (len(self.doc), len(self.vocab_sizes)):
            raise DomainError("words must have shape (tokens, fields)")
        if len(self.doc) and (self.doc.min() < 0 or self.doc.max() >= self.n_docs):
            raise DomainError("document index out of range")
        for f, v in enumerate(self.vocab_sizes):
            if len(self.doc) and (self.words[:, f].min() < 0 or self.words[:, f].max() >= v):
                raise DomainError(f"word id out of range in field {f}")
        if np.any(self.doc_lengths == 0):
            raise DomainError("documents must be nonempty")

    @classmethod
    def from_counts(cls, docs: Sequence[dict], vocab_size: int) -> "TokenData":
        """From per-document ``{word_id: count}`` maps."""
        doc_idx, words = [], []
        for d, counts in enumerate(docs):
            for w, c in sorted(counts.items()):
                if c < 0:
                    raise DomainError("counts must be nonnegative")
                doc_idx.extend([d] * int(c))
                words.extend([int(w)] * int(c))
        return cls(np.array(doc_idx, dtype=np.int64), np.array(words, dtype=np.int64),
                   (vocab_size,), len(docs))

    @property
    def n_tokens(self) -> int:
        return len(self.doc)

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.bincount(self.doc, minlength=self.n_docs)


@dataclass
class HbnbpState:
    """Full sampler state; arrays indexed by component ``k`` share length ``K``.

    ``rounds`` holds the round label of each component (exact mode only);
    the gaps between consecutive rounds are :attr:`round_gaps`.
    """

    shared: np.ndarray                 # (K,)  top-level weights
    doc_logit: np.ndarray              # (D, K) logit of the per-document weights
    log_rates: np.ndarray              # (D, K) log of the gamma auxiliaries
    assign: np.ndarray                 # (T,)
    topics: List[np.ndarray]           # per field, (K, V_f)
    shapes: np.ndarray                 # (D,) negative binomial shapes
    rounds: Optional[np.ndarray] = None
    token_slice: Optional[np.ndarray] = None
    round_slice: Optional[np.ndarray] = None
    iteration: int = 0
    stats: dict = field(default_factory=lambda: {"mh_accept": 0, "mh_total": 0, "mh_nan": 0, "capped": 0})

    @property
    def K(self) -> int:
        return len(self.shared)

    # Per-document weights of barely used components are far below any
    # floating-point floor, so they are held on the log scale; these views
    # may underflow to zero.
    @property
    def doc_weights(self) -> np.ndarray:
        return special.expit(self.doc_logit)

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self.log_rates)

    @property
    def round_gaps(self) -> Optional[np.ndarray]:
        if self.rounds is None:
            return None
        return np.diff(self.rounds, prepend=0)

    def copy(self) -> "HbnbpState":
        return HbnbpState(self.shared.copy(), self.doc_logit.copy(), self.log_rates.copy(),
                          self.assign.copy(), [t.copy() for t in self.topics], self.shapes.copy(),
                          None if self.rounds is None else self.rounds.copy(),
                          None if self.token_slice is None else self.token_slice.copy(),
                          None if self.round_slice is None else self.round_slice.copy(),
                          self.iteration, dict(self.stats))


def count_matrix(data: TokenData, assign: np.ndarray, K: int) -> np.ndarray:
    flat = np.bincount(data.doc * K + assign, minlength=data.n_docs * K)
    return flat.reshape(data.n_docs, K)


def resolve_shapes(data: TokenData, cfg: SamplerConfig) -> np.ndarray:
    if cfg.shape is not None:
        return np.full(data.n_docs, float(cfg.shape))
    return heuristic_shape(data.doc_lengths, cfg.mass0, cfg.conc0)


def check_invariants(state: HbnbpState, data: TokenData, cfg: SamplerConfig) -> None:
    """Raise :class:`DomainError` if any state invariant is violated."""
    K = state.K
    if state.doc_logit.shape != (data.n_docs, K) or state.log_rates.shape != (data.n_docs, K):
        raise DomainError("per-document arrays have the wrong shape")
    if state.assign.shape != (data.n_tokens,) or (len(state.assign) and
                                                   (state.assign.min() < 0 or state.assign.max() >= K)):
        raise DomainError("assignments out of range")
    n = count_matrix(data, state.assign, K)
    if not np.array_equal(n.sum(axis=1), data.doc_lengths):
        raise DomainError("assignment counts do not add up to document lengths")
    if np.any(~(state.shared > 0)) or np.any(~(state.shared < 1)):
        raise DomainError("shared weights must lie in (0, 1)")
    if not np.all(np.isfinite(state.doc_logit)):
        raise DomainError("per-document weights must lie in (0, 1)")
    if np.any(np.isnan(state.log_rates)) or np.any(state.log_rates == np.inf):
        raise DomainError("rates must be finite and nonnegative")
    for t in state.topics:
        if t.shape[0] != K or np.any(np.abs(t.sum(axis=1) - 1) > 1e-12):
            raise DomainError("topic rows must be probability vectors")
    if cfg.mode == "exact":
        if state.rounds is None or len(state.rounds) != K or np.any(state.round_gaps < 0):
            raise DomainError("rounds must be nondecreasing and nonnegative")
        if state.token_slice is not None and np.any(state.token_slice > cfg.zeta(state.assign)):
            raise DomainError("slice variable above its component level")
