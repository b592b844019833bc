import numpy as np
import pytest

from bnbp.errors import DomainError
from bnbp.measures import AtomicMeasure, CountMeasure


def test_atomic_csv_round_trip():
    m = AtomicMeasure(np.array([0.25, 0.5]), np.array([0.1, 0.7]))
    back = AtomicMeasure.from_csv(m.to_csv())
    assert back.pairs() == m.pairs()
    assert m.to_csv().splitlines()[0] == "location,weight"


def test_atomic_labels_round_trip():
    m = AtomicMeasure.from_pairs([("a", 2.0), ("b", 6.0)])
    assert AtomicMeasure.from_csv(m.to_csv()).pairs() == [("a", 2.0), ("b", 6.0)]


def test_atomic_validate():
    AtomicMeasure.from_pairs([(0.1, 0.5), (0.2, 1.0)]).validate(upper=1.0)
    with pytest.raises(DomainError):
        AtomicMeasure.from_pairs([(0.1, 0.5), (0.1, 0.2)]).validate()
    with pytest.raises(DomainError):
        AtomicMeasure.from_pairs([(0.1, 0.0)]).validate()
    with pytest.raises(DomainError):
        AtomicMeasure.from_pairs([(0.1, 1.5)]).validate(upper=1.0)


def test_count_measure_drops_zeros():
    c = CountMeasure(np.array([1.0, 2.0, 3.0]), np.array([0, 2, 1]))
    assert c.as_dict() == {2.0: 2, 3.0: 1}
    assert c.total == 3
    assert CountMeasure.from_csv(c.to_csv()).as_dict() == c.as_dict()


def test_count_measure_rejects_negative():
    with pytest.raises(DomainError):
        CountMeasure(np.array([1.0]), np.array([-1]))


def test_empty_measures():
    assert len(AtomicMeasure.empty()) == 0
    assert CountMeasure.empty().total == 0
    assert AtomicMeasure.from_pairs([]).total_mass == 0.0
