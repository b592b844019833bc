"""Synthetic "bars" admixture corpus on a square pixel grid."""

from __future__ import annotations

import numpy as np
from scipy import optimize

from ..corpus import Corpus, Document


def bar_topics(side: int = 5) -> np.ndarray:
    """Uniform distributions over each row and each column of a
    ``side x side`` grid, ``(2 side, side^2)``; rows first."""
    V = side * side
    topics = np.zeros((2 * side, V))
    grid = np.arange(V).reshape(side, side)
    for i in range(side):
        topics[i, grid[i, :]] = 1.0 / side
        topics[side + i, grid[:, i]] = 1.0 / side
    return topics


def make_toy_bars(seed: int = 0, n_docs: int = 50, doc_len: int = 100, side: int = 5,
                  concentration: float = 1.0):
    """Each document draws proportions ``Dirichlet(concentration * 1)`` over
    the bars and ``doc_len`` pixels from the resulting mixture.

    Returns ``(corpus, topics)``.
    """
    rng = np.random.default_rng(seed)
    topics = bar_topics(side)
    n_topics, V = topics.shape
    docs = []
    for d in range(n_docs):
        weights = rng.dirichlet(np.full(n_topics, concentration))
        counts = rng.multinomial(doc_len, weights @ topics)
        docs.append(Document(f"doc{d:03d}", {int(w): int(c) for w, c in enumerate(counts) if c > 0}, "bars"))
    vocab = [f"px{r}_{c}" for r in range(side) for c in range(side)]
    return Corpus((V,), docs, vocab), topics


def match_topics(estimated: np.ndarray, truth: np.ndarray):
    """Best one-to-one matching under total-variation distance.

    Returns ``(row indices into estimated, column indices into truth,
    distances)`` for the matched pairs.
    """
    tv = 0.5 * np.abs(estimated[:, None, :] - truth[None, :, :]).sum(axis=2)
    rows, cols = optimize.linear_sum_assignment(tv)
    return rows, cols, tv[rows, cols]
