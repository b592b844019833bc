"""Bag-of-words corpora and their text format.

One document per line::

    doc_id<TAB>group<TAB>word:count word:count ...

``group`` is ``-`` when absent. Word keys are integer ids, or comma-joined id
tuples for multi-field observations. Lines starting with ``#`` are comments,
except ``# vocab_sizes = 25`` (or ``25,8``), which fixes the vocabulary sizes.
A vocabulary file lists one token per line; the line index is the id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .inference.state import TokenData

Key = Union[int, Tuple[int, ...]]
NO_GROUP = "-"


@dataclass
class Document:
    doc_id: str
    counts: Dict[Key, int]
    group: Optional[str] = None

    @property
    def length(self) -> int:
        return int(sum(self.counts.values()))


@dataclass
class Corpus:
    vocab_sizes: Tuple[int, ...]
    docs: List[Document] = field(default_factory=list)
    vocab: Optional[List[str]] = None

    def __post_init__(self):
        if isinstance(self.vocab_sizes, int):
            self.vocab_sizes = (self.vocab_sizes,)
        self.vocab_sizes = tuple(int(v) for v in self.vocab_sizes)
        self.validate()

    @property
    def vocab_size(self) -> int:
        return self.vocab_sizes[0]

    def validate(self) -> None:
        F = len(self.vocab_sizes)
        seen = set()
        for doc in self.docs:
            if doc.doc_id in seen:
                raise DataError(f"duplicate document id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            if not doc.counts:
                raise DataError(f"document {doc.doc_id!r} is empty")
            for key, c in doc.counts.items():
                ids = key if isinstance(key, tuple) else (key,)
                if len(ids) != F:
                    raise DataError(f"document {doc.doc_id!r}: expected {F} fields per word")
                if any(not 0 <= i < v for i, v in zip(ids, self.vocab_sizes)):
                    raise DataError(f"document {doc.doc_id!r}: word id out of range")
                if not (isinstance(c, (int, np.integer)) and c >= 1):
                    raise DataError(f"document {doc.doc_id!r}: counts must be positive integers")

    def groups(self) -> List[str]:
        return sorted({d.group for d in self.docs if d.group is not None})

    def subset(self, group: str) -> "Corpus":
        return Corpus(self.vocab_sizes, [d for d in self.docs if d.group == group], self.vocab)

    def to_tokens(self) -> TokenData:
        doc_idx, words = [], []
        for d, doc in enumerate(self.docs):
            for key, c in sorted(doc.counts.items()):
                ids = key if isinstance(key, tuple) else (key,)
                doc_idx.extend([d] * c)
                words.extend([ids] * c)
        w = np.array(words, dtype=np.int64).reshape(len(words), len(self.vocab_sizes))
        return TokenData(np.array(doc_idx, dtype=np.int64), w, self.vocab_sizes, len(self.docs))

    def document_tokens(self) -> List[np.ndarray]:
        """Per-document token arrays ``(N_d, F)``."""
        out = []
        for doc in self.docs:
            rows = [k if isinstance(k, tuple) else (k,) for k, c in sorted(doc.counts.items()) for _ in range(c)]
            out.append(np.array(rows, dtype=np.int64).reshape(len(rows), len(self.vocab_sizes)))
        return out

    # text format --------------------------------------------------------
    def to_text(self) -> str:
        lines = ["# vocab_sizes = " + ",".join(map(str, self.vocab_sizes))]
        for doc in self.docs:
            words = " ".join(f"{_key_text(k)}:{c}" for k, c in sorted(doc.counts.items()))
            lines.append(f"{doc.doc_id}\t{doc.group if doc.group is not None else NO_GROUP}\t{words}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, vocab_sizes: Optional[Sequence[int]] = None,
                  vocab: Optional[List[str]] = None) -> "Corpus":
        docs, declared = [], None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("vocab_sizes"):
                    try:
                        declared = tuple(int(v) for v in body.split("=", 1)[1].split(","))
                    except (IndexError, ValueError):
                        raise DataError(f"line {lineno}: bad vocab_sizes header") from None
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"line {lineno}: expected 3 tab-separated fields")
            doc_id, group, body = parts
            counts: Dict[Key, int] = {}
            for item in body.split():
                try:
                    key_s, c_s = item.rsplit(":", 1)
                    key = _parse_key(key_s)
                    c = int(c_s)
                except ValueError:
                    raise DataError(f"line {lineno}: bad word:count item {item!r}") from None
                if c < 1:
                    raise DataError(f"line {lineno}: counts must be positive")
                counts[key] = counts.get(key, 0) + c
            docs.append(Document(doc_id, counts, None if group == NO_GROUP else group))
        sizes = vocab_sizes or declared
        if sizes is None and vocab is not None:
            sizes = (len(vocab),)
        if sizes is None:
            if not docs:
                raise DataError("cannot infer vocabulary size of an empty corpus")
            keys = [k if isinstance(k, tuple) else (k,) for d in docs for k in d.counts]
            if not keys:
                raise DataError("corpus documents hold no words")
            sizes = tuple(int(v) + 1 for v in np.max(np.array(keys), axis=0))
        return cls(tuple(sizes), docs, vocab)

    def write(self, path, vocab_path=None) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
        if vocab_path is not None and self.vocab is not None:
            Path(vocab_path).write_text("".join(t + "\n" for t in self.vocab), encoding="utf-8")

    @classmethod
    def read(cls, path, vocab_path=None) -> "Corpus":
        try:
            text = Path(path).read_text(encoding="utf-8")
            vocab = None
            if vocab_path is not None:
                vocab = Path(vocab_path).read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise DataError(f"cannot read corpus: {exc}") from exc
        return cls.from_text(text, vocab=vocab)


def _key_text(key: Key) -> str:
    return ",".join(map(str, key)) if isinstance(key, tuple) else str(key)


def _parse_key(s: str) -> Key:
    if "," in s:
        return tuple(int(v) for v in s.split(","))
    return int(s)
