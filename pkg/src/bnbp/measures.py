"""Finite atomic measures and count measures, with CSV round-tripping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import DomainError, ParameterError


def _as_locations(locations) -> np.ndarray:
    if isinstance(locations, np.ndarray) and locations.ndim == 1:
        return locations
    items = list(locations)
    arr = np.asarray(items)
    # numpy would coerce mixed labels (e.g. "x" and 7) to strings
    if arr.ndim != 1 or (arr.dtype.kind in "US" and not all(isinstance(v, str) for v in items)):
        arr = np.empty(len(items), dtype=object)
        arr[:] = items
    return arr


@dataclass
class AtomicMeasure:
    """A finite list of (location, weight) atoms.

    Locations are either floats in [0, 1] (simulation) or opaque hashable
    labels (inference). ``rounds`` is set by the size-biased sampler, and
    ``dropped_mass`` carries the expected weight lost to truncation.
    """

    locations: np.ndarray
    weights: np.ndarray
    rounds: Optional[np.ndarray] = None
    dropped_mass: float = 0.0

    def __post_init__(self):
        self.locations = _as_locations(self.locations)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.locations.shape != self.weights.shape:
            raise DomainError("locations and weights must have the same length")
        if self.rounds is not None:
            self.rounds = np.asarray(self.rounds, dtype=int)

    @classmethod
    def empty(cls) -> "AtomicMeasure":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "AtomicMeasure":
        pairs = list(pairs)
        if not pairs:
            return cls.empty()
        locs, weights = zip(*pairs)
        return cls(_as_locations(list(locs)), np.array(weights, dtype=float))

    def __len__(self) -> int:
        return len(self.weights)

    def pairs(self):
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def validate(self, upper: Optional[float] = None) -> None:
        """Check the measure invariants; ``upper=1`` for beta-family draws."""
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise DomainError("atom weights must be finite and positive")
        if upper is not None and np.any(self.weights > upper):
            raise DomainError(f"atom weights must not exceed {upper}")
        if len(set(self.locations.tolist())) != len(self.locations):
            raise DomainError("atom locations must be distinct")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["location", "weight"])
        for loc, wt in self.pairs():
            w.writerow([loc, repr(float(wt))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AtomicMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["location", "weight"]:
            raise DomainError("expected header 'location,weight'")
        return cls.from_pairs((_parse_location(loc), float(w)) for loc, w in rows[1:])


@dataclass
class CountMeasure:
    """Atoms carrying positive integer counts; zero counts are never stored."""

    locations: np.ndarray
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.locations = _as_locations(self.locations)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.locations.shape != self.counts.shape:
            raise DomainError("locations and counts must have the same length")
        if np.any(self.counts < 0):
            raise DomainError("counts must be nonnegative")
        keep = self.counts > 0
        if not np.all(keep):
            self.locations = self.locations[keep]
            self.counts = self.counts[keep]

    @classmethod
    def empty(cls) -> "CountMeasure":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_dict(cls, mapping: dict) -> "CountMeasure":
        if not mapping:
            return cls.empty()
        locs = list(mapping.keys())
        return cls(_as_locations(locs), np.array([mapping[k] for k in locs], dtype=np.int64))

    def as_dict(self) -> dict:
        return dict(zip(self.locations.tolist(), self.counts.tolist()))

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["location", "count"])
        for loc, c in zip(self.locations.tolist(), self.counts.tolist()):
            w.writerow([loc, int(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CountMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["location", "count"]:
            raise DomainError("expected header 'location,count'")
        return cls.from_dict({_parse_location(loc): int(c) for loc, c in rows[1:]})


def _parse_location(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def check_unit_weights(measure: AtomicMeasure, *, allow_one: bool) -> None:
    w = measure.weights
    if np.any(w <= 0):
        raise ParameterError("base weights must be positive")
    if allow_one:
        if np.any(w > 1):
            raise ParameterError("base weights must lie in (0, 1]")
    elif np.any(w >= 1):
        raise ParameterError("base weights must lie in (0, 1)")
