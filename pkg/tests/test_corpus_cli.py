import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnbp import cli
from bnbp.classify import Confusion, UnigramBaseline, assign_labels
from bnbp.corpus import Corpus, Document
from bnbp.errors import DataError


# ---------------------------------------------------------------------------
# corpus format


@given(st.lists(st.tuples(st.dictionaries(st.integers(0, 9), st.integers(1, 5), min_size=1, max_size=6),
                          st.sampled_from([None, "a", "b"])), max_size=8))
def test_corpus_round_trip(rows):
    docs = [Document(f"d{i}", counts, g) for i, (counts, g) in enumerate(rows)]
    c = Corpus((10,), docs)
    back = Corpus.from_text(c.to_text())
    assert back == c


def test_multifield_corpus(tmp_path):
    c = Corpus((4, 3), [Document("x", {(1, 2): 2, (3, 0): 1}, "g")])
    c.write(tmp_path / "c.txt")
    back = Corpus.read(tmp_path / "c.txt")
    assert back == c
    np.testing.assert_array_equal(back.to_tokens().words, [[1, 2], [1, 2], [3, 0]])


def test_corpus_errors(tmp_path):
    with pytest.raises(DataError):
        Corpus.from_text("d1\t-\t")
    with pytest.raises(DataError):
        Corpus.from_text("d1\t-\t3:0")
    with pytest.raises(DataError):
        Corpus.from_text("# vocab_sizes = 3\nd1\t-\t5:1")
    with pytest.raises(DataError):
        Corpus.from_text("d1\t-\t1:1\nd1\t-\t2:1")
    with pytest.raises(DataError):
        Corpus.read(tmp_path / "missing.txt")


def test_vocab_file_sets_size(tmp_path):
    (tmp_path / "v.txt").write_text("a\nb\nc\nd\n")
    (tmp_path / "c.txt").write_text("d1\t-\t0:2 1:1\n")
    assert Corpus.read(tmp_path / "c.txt", tmp_path / "v.txt").vocab_sizes == (4,)


# ---------------------------------------------------------------------------
# classification helpers


def test_assign_labels_ties_to_lowest():
    assert assign_labels(np.array([[1.0, 1.0], [0.0, 2.0]]), ["a", "b"]) == ["a", "b"]
    with pytest.raises(ValueError):
        assign_labels(np.zeros((1, 2)), ["b", "a"])


def test_confusion_rows_sum_to_group_counts():
    conf = Confusion.from_labels(["a", "a", "b"], ["a", "b", "b"], ["a", "b"])
    np.testing.assert_array_equal(conf.matrix.sum(axis=1), [2, 1])
    assert conf.accuracy == pytest.approx(2 / 3)
    assert conf.to_csv().splitlines()[0] == "true\\predicted,a,b"


def test_unigram_baseline():
    train = Corpus((4,), [Document("1", {0: 5}, "a"), Document("2", {3: 5}, "b")])
    test = Corpus((4,), [Document("3", {0: 1}, "a"), Document("4", {3: 2, 0: 1}, "b")])
    assert UnigramBaseline().fit(train).predict(test) == ["a", "b"]


# ---------------------------------------------------------------------------
# command line


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    assert run("make-toy-bars", "--out", d / "bars.txt", "--vocab", d / "vocab.txt",
               "--topics", d / "topics.csv", "--seed", 1) == 0
    return d


def test_make_toy_bars(toy, tmp_path):
    c = Corpus.read(toy / "bars.txt", toy / "vocab.txt")
    assert len(c.docs) == 50 and c.vocab_sizes == (25,)
    assert all(d.length > 0 for d in c.docs)
    man = json.loads((toy / "bars.txt.manifest.json").read_text())
    assert man["seed"] == 1 and man["command"] == "make-toy-bars"
    run("make-toy-bars", "--out", tmp_path / "again.txt", "--seed", 1)
    assert (tmp_path / "again.txt").read_text() == (toy / "bars.txt").read_text()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "7")
    run("make-toy-bars", "--out", tmp_path / "a.txt")
    assert json.loads((tmp_path / "a.txt.manifest.json").read_text())["seed"] == 7
    monkeypatch.setenv(cli.SEED_ENV, "x")
    assert run("make-toy-bars", "--out", tmp_path / "b.txt") == cli.EXIT_USAGE


@pytest.mark.parametrize("mode", ["exact", "finite"])
def test_train(toy, tmp_path, mode):
    out = tmp_path / mode
    assert run("train", toy / "bars.txt", "--out", out, "--set", f"mode={mode}", "--set", "iterations=6",
               "--set", "n_components=20", "--seed", 3) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["mode"] == mode and man["seed"] == 3
    assert man["retained_samples"] == 5     # burn-in 20% of 6
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,used_components,log_joint,K" and len(trace) == 7
    for name in man["outputs"]:
        assert (out / name.split("/")[-1]).exists()


def test_train_config_precedence(toy, tmp_path):
    (tmp_path / "cfg.txt").write_text("iterations = 3\nseed = 11\neta = 0.2\n")
    assert run("train", toy / "bars.txt", "--out", tmp_path / "o", "--config", tmp_path / "cfg.txt",
               "--set", "eta=0.3") == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["eta"] == 0.3 and man["seed"] == 11 and man["config"]["iterations"] == 3


def test_train_resume_matches(toy, tmp_path):
    base = ["train", toy / "bars.txt", "--seed", 2, "--checkpoint-every", 2, "--set", "burn_in=0"]
    run(*base, "--out", tmp_path / "a", "--set", "iterations=4")
    run(*base, "--out", tmp_path / "b", "--set", "iterations=2")
    run(*base, "--out", tmp_path / "b", "--set", "iterations=4", "--resume")
    assert (tmp_path / "a" / "trace.csv").read_text() == (tmp_path / "b" / "trace.csv").read_text()


def test_one_document_corpus(tmp_path):
    (tmp_path / "one.txt").write_text("d\t-\t0:3 2:1\n")
    assert run("train", tmp_path / "one.txt", "--out", tmp_path / "o", "--set", "iterations=3") == 0


def test_exit_codes(toy, tmp_path):
    assert run("train", tmp_path / "missing.txt", "--out", tmp_path / "o") == cli.EXIT_DATA
    assert run("train", toy / "bars.txt", "--out", tmp_path / "o", "--set", "eta=-1") == cli.EXIT_USAGE
    assert run("train", toy / "bars.txt", "--out", tmp_path / "o", "--set", "nonsense=1") == cli.EXIT_USAGE
    assert run("frobnicate") == cli.EXIT_USAGE
    assert run("simulate-asymptotics", "--out", tmp_path / "s", "--conc", "0.5", "--disc", "0") == cli.EXIT_USAGE
    assert run("simulate-asymptotics", "--out", tmp_path / "s", "--disc", "1.5") == cli.EXIT_USAGE


def test_simulate_asymptotics(tmp_path):
    args = ["simulate-asymptotics", "--r-min", 1, "--r-max", 101, "--n-r", 3, "--replicates", 2, "--seed", 5]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--workers", 2) == 0
    for name in ("growth_disc0.csv", "growth_disc0.5.csv", "sizes_disc0.csv", "fits.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "growth_disc0.csv").read_text().splitlines()
    assert rows[0] == "r,N,K" and len(rows) == 1 + 3 * 2
    fits = (tmp_path / "a" / "fits.csv").read_text().splitlines()
    assert fits[0] == "disc,law,x,quantity,estimate,target"
    assert any(",log-linear,r,slope," in f for f in fits)
    assert any(",power-offset,r,prefactor," in f for f in fits)


def test_simulate_single_r(tmp_path):
    assert run("simulate-asymptotics", "--out", tmp_path, "--disc", "0", "--n-r", 1, "--r-min", 7,
               "--replicates", 1) == 0
    assert len((tmp_path / "growth_disc0.csv").read_text().splitlines()) == 2


def _two_group_corpus(rng, n_per, lo, hi, vocab, length):
    docs = []
    for g, (a, b), L in zip("ab", vocab, length):
        for i in range(n_per):
            n = int(rng.integers(*L))
            w = rng.integers(a, b, size=n)
            docs.append(Document(f"{g}{i}", {int(k): int(c) for k, c in zip(*np.unique(w, return_counts=True))}, g))
    return Corpus((hi,), docs)


def test_classify_disjoint_vocabularies(tmp_path):
    rng = np.random.default_rng(0)
    spec = dict(vocab=[(0, 5), (5, 10)], length=[(10, 20), (10, 20)])
    _two_group_corpus(rng, 10, 0, 10, **spec).write(tmp_path / "train.txt")
    _two_group_corpus(rng, 5, 0, 10, **spec).write(tmp_path / "test.txt")
    models = []
    for g in "ab":
        assert run("train", tmp_path / "train.txt", "--group", g, "--out", tmp_path / g,
                   "--set", "iterations=30", "--seed", 1) == 0
        models += ["--model", f"{g}={tmp_path / g / 'samples.ndjson'}"]
    assert run("classify", tmp_path / "test.txt", *models, "--out", tmp_path / "cls", "--inner", 20,
               "--baseline-train", tmp_path / "train.txt") == 0
    man = json.loads((tmp_path / "cls" / "manifest.json").read_text())
    assert man["accuracy"] == 1.0
    conf = (tmp_path / "cls" / "confusion.csv").read_text().splitlines()
    assert conf[1:] == ["a,5,0", "b,0,5"]
    # a single model labels everything with its group
    assert run("classify", tmp_path / "test.txt", models[0], models[1], "--out", tmp_path / "one",
               "--inner", 5) == 0
    pred = (tmp_path / "one" / "predictions.csv").read_text().splitlines()[1:]
    assert all(line.split(",")[2] == "a" for line in pred)
