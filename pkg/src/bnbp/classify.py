"""Maximum-likelihood classification of documents across groups."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .corpus import Corpus
from .errors import DataError


def assign_labels(scores: np.ndarray, groups: Sequence[str]) -> List[str]:
    """Argmax over the columns of ``scores`` ``(docs, groups)``.

    ``groups`` must be sorted; ties go to the earliest (lowest) group id.
    """
    scores = np.asarray(scores, dtype=float)
    if list(groups) != sorted(groups):
        raise ValueError("groups must be sorted")
    if scores.ndim != 2 or scores.shape[1] != len(groups):
        raise ValueError("scores must have one column per group")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")
    return [groups[i] for i in np.argmax(scores, axis=1)]


@dataclass
class Confusion:
    groups: List[str]
    matrix: np.ndarray          # rows: true group, columns: predicted group

    @classmethod
    def from_labels(cls, truth: Sequence[str], predicted: Sequence[str], groups: Sequence[str]) -> "Confusion":
        index = {g: i for i, g in enumerate(groups)}
        m = np.zeros((len(groups), len(groups)), dtype=np.int64)
        for t, p in zip(truth, predicted):
            m[index[t], index[p]] += 1
        return cls(list(groups), m)

    @property
    def accuracy(self) -> float:
        total = self.matrix.sum()
        return float(np.trace(self.matrix) / total) if total else float("nan")

    def to_csv(self) -> str:
        lines = ["true\\predicted," + ",".join(self.groups)]
        for g, row in zip(self.groups, self.matrix):
            lines.append(g + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


class UnigramBaseline:
    """Length-blind comparator: one add-``smoothing`` multinomial over word
    keys per group, with no model of how many words a document has."""

    def __init__(self, smoothing: float = 0.5):
        self.smoothing = smoothing
        self.log_probs: Dict[str, Dict] = {}
        self.log_unseen: Dict[str, float] = {}

    def fit(self, corpus: Corpus) -> "UnigramBaseline":
        groups = corpus.groups()
        if not groups:
            raise DataError("baseline needs labelled training documents")
        n_keys = int(np.prod(corpus.vocab_sizes))
        for g in groups:
            totals: Dict = {}
            for doc in corpus.docs:
                if doc.group == g:
                    for k, c in doc.counts.items():
                        totals[k] = totals.get(k, 0) + c
            denom = np.log(sum(totals.values()) + self.smoothing * n_keys)
            self.log_probs[g] = {k: np.log(c + self.smoothing) - denom for k, c in totals.items()}
            self.log_unseen[g] = float(np.log(self.smoothing) - denom)
        return self

    @property
    def groups(self) -> List[str]:
        return sorted(self.log_probs)

    def score(self, corpus: Corpus) -> np.ndarray:
        out = np.empty((len(corpus.docs), len(self.groups)))
        for j, g in enumerate(self.groups):
            lp, unseen = self.log_probs[g], self.log_unseen[g]
            for i, doc in enumerate(corpus.docs):
                out[i, j] = sum(c * lp.get(k, unseen) for k, c in doc.counts.items())
        return out

    def predict(self, corpus: Corpus) -> List[str]:
        return assign_labels(self.score(corpus), self.groups)

