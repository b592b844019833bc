"""Command-line entry point.

    bnbp simulate-asymptotics --out DIR
    bnbp make-toy-bars --out corpus.txt
    bnbp train corpus.txt --out DIR [--config FILE] [--set key=value ...]
    bnbp classify test.txt --model GROUP=DIR/samples.ndjson ... --out DIR

Every command writes a ``manifest.json`` (or ``<out>.manifest.json``) with the
command line, the resolved configuration, the seed, the package version, the
output files and the wall time. Exit codes: 0 success, 2 usage, 3 data,
4 numerical failure. ``BNBP_SEED`` overrides the default seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import BnbpError, DataError, DomainError, ParameterError
from .corpus import Corpus

log = logging.getLogger("bnbp")

SEED_ENV = "BNBP_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ParameterError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# manifests and small helpers


class Manifest:
    def __init__(self, command: str, argv: List[str], seed: int):
        self.record = {"command": command, "argv": argv, "seed": seed, "version": __version__,
                       "config": {}, "outputs": [], "started": time.strftime("%Y-%m-%dT%H:%M:%S")}
        self._t0 = time.perf_counter()

    def output(self, path) -> Path:
        self.record["outputs"].append(str(path))
        return Path(path)

    def write(self, path) -> None:
        missing = [p for p in self.record["outputs"] if not Path(p).exists()]
        if missing:
            raise DataError(f"declared outputs were not written: {missing}")
        self.record["seconds"] = round(time.perf_counter() - self._t0, 3)
        Path(path).write_text(json.dumps(self.record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_kv(path) -> Dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _parse_sets(items: Optional[List[str]]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from None


def _mkdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# simulate-asymptotics

_ASYM_DEFAULTS = {"mass": "3", "conc": "3", "disc": "0,0.5", "r_min": "1", "r_max": "1001",
                  "n_r": "101", "replicates": "100", "eps": "auto"}


def _resolve(args, defaults: Dict[str, str]) -> Dict[str, str]:
    """Flag value if given, else config file value, else default."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        from_file = _read_kv(args.config)
        unknown = set(from_file) - set(defaults)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(from_file)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = str(v)
    return cfg


def cmd_simulate_asymptotics(args, manifest: Manifest) -> None:
    from . import asymptotics as asy

    cfg = _resolve(args, _ASYM_DEFAULTS)
    try:
        mass, conc = float(cfg["mass"]), float(cfg["conc"])
        r_min, r_max, n_r = float(cfg["r_min"]), float(cfg["r_max"]), int(cfg["n_r"])
        replicates = int(cfg["replicates"])
        eps = None if cfg["eps"] == "auto" else float(cfg["eps"])
    except ValueError as exc:
        raise ParameterError(f"bad numeric setting: {exc}") from None
    discs = _floats(cfg["disc"])
    if n_r < 1 or replicates < 1:
        raise ParameterError("n_r and replicates must be at least 1")
    if not 0 < r_min <= r_max:
        raise ParameterError("need 0 < r_min <= r_max")
    for d in discs:
        asy._check_bp(mass, conc, d)
        if not conc > 1 - d:
            raise ParameterError("growth laws need conc > 1 - disc (finite expected data points)")
    grid = np.linspace(r_min, r_max, n_r) if n_r > 1 else np.array([r_min])
    manifest.record["config"] = dict(cfg, r_grid="linspace(r_min, r_max, n_r)")
    out = _mkdir(args.out)
    fit_rows = ["disc,law,x,quantity,estimate,target"]
    for i, d in enumerate(discs):
        ss = np.random.SeedSequence([manifest.record["seed"], i])
        triples = asy.simulate_growth(grid, mass, conc, d, seed=int(ss.generate_state(1)[0]),
                                      eps=eps, replicates=replicates, workers=args.workers)
        tag = f"disc{d:g}"
        manifest.output(out / f"growth_{tag}.csv").write_text(asy.write_triples_csv(triples))
        manifest.output(out / f"sizes_{tag}.csv").write_text(asy.write_size_table_csv(triples))
        fit_rows.extend(_fit_rows(asy, triples, mass, conc, d, multi_r=len(grid) > 1))
    manifest.output(out / "fits.csv").write_text("\n".join(fit_rows) + "\n")


def _fit_rows(asy, triples, mass, conc, disc, multi_r: bool) -> List[str]:
    rows = []
    r_last = max(t.r for t in triples)
    mean_n = float(np.mean([t.N for t in triples if t.r == r_last]))
    xi = mass * conc / (conc + disc - 1)
    rows.append(f"{disc:g},points,r,N/r at r={r_last:g},{mean_n / r_last!r},{xi!r}")
    if not multi_r:
        return rows
    if disc == 0:
        for x in ("r", "N"):
            f = asy.fit_growth_law(triples, "log-linear", x)
            rows.append(f"{disc:g},log-linear,{x},slope,{f.slope!r},{mass * conc!r}")
        return rows
    consts = {"r": float(asy.expected_clusters_3bnbp_asymptote(1.0, mass, conc, disc)),
              "N": asy.composite_constants(mass, conc, disc)["clusters"]}
    for x in ("r", "N"):
        f = asy.fit_growth_law(triples, "power-law", x)
        rows.append(f"{disc:g},power-law,{x},exponent,{f.slope!r},{disc!r}")
        g = asy.fit_growth_law(triples, "power-offset", x, exponent=disc)
        rows.append(f"{disc:g},power-offset,{x},prefactor,{g.prefactor!r},{consts[x]!r}")
    return rows


# ---------------------------------------------------------------------------
# make-toy-bars


def cmd_make_toy_bars(args, manifest: Manifest) -> None:
    from .inference.toybars import make_toy_bars

    corpus, topics = make_toy_bars(manifest.record["seed"], n_docs=args.docs, doc_len=args.doc_len)
    manifest.record["config"] = {"docs": args.docs, "doc_len": args.doc_len, "side": 5,
                                 "proportions": "Dirichlet(1) over the bars"}
    out = Path(args.out)
    if out.parent != Path(""):
        _mkdir(out.parent)
    corpus.write(manifest.output(out))
    if args.vocab:
        corpus.write(out, vocab_path=manifest.output(args.vocab))
    if args.topics:
        lines = ["topic,word,prob"] + [f"{k},{w},{p!r}" for k, row in enumerate(topics)
                                       for w, p in enumerate(row) if p > 0]
        manifest.output(args.topics).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# train


def cmd_train(args, manifest: Manifest) -> None:
    from .inference.config import SamplerConfig
    from .inference.runner import run_chain

    corpus = Corpus.read(args.corpus, args.vocab)
    if args.group is not None:
        corpus = corpus.subset(args.group)
        if not corpus.docs:
            raise DataError(f"no documents in group {args.group!r}")
    if not corpus.docs:
        raise DataError("corpus has no documents")
    overrides = _parse_sets(args.set)
    settings = _read_kv(args.config) if args.config else {}
    settings.update(overrides)
    cfg = SamplerConfig.from_text("".join(f"{k} = {v}\n" for k, v in settings.items()))
    if args.seed is not None or "seed" not in settings:
        cfg = cfg.replace(seed=manifest.record["seed"])
    manifest.record["seed"] = cfg.seed
    manifest.record["config"] = json.loads(json.dumps(cfg.__dict__))
    manifest.record["config"]["burn_in_rule"] = "20% of iterations unless burn_in is set; no thinning by default"
    out = _mkdir(args.out)
    store = manifest.output(out / "samples.ndjson")
    trace = manifest.output(out / "trace.csv")
    ckpt = manifest.output(out / "checkpoint.npz")
    data = corpus.to_tokens()

    def progress(state):
        if args.verbose and state.iteration % max(1, cfg.iterations // 20) == 0:
            log.info("iteration %d: K=%d", state.iteration, state.K)

    result = run_chain(data, cfg, store_path=store, trace_path=trace, checkpoint_path=ckpt,
                       checkpoint_every=args.checkpoint_every, resume=args.resume, callback=progress)
    manifest.record["retained_samples"] = len(result.samples)
    manifest.record["final_K"] = result.state.K
    manifest.record["sampler_stats"] = result.state.stats


# ---------------------------------------------------------------------------
# classify


def _load_model(spec: str):
    from .inference.store import load_store

    if "=" not in spec:
        raise ParameterError(f"--model expects GROUP=PATH, got {spec!r}")
    group, path = spec.split("=", 1)
    header, samples = load_store(path)
    if not samples:
        raise DataError(f"{path}: store holds no retained samples")
    return group, header, samples


def cmd_classify(args, manifest: Manifest) -> None:
    from .classify import Confusion, UnigramBaseline, assign_labels
    from .inference.predictive import ESTIMATOR, score_documents

    test = Corpus.read(args.corpus, args.vocab)
    if not test.docs:
        raise DataError("test corpus has no documents")
    models = dict((g, (h, s)) for g, h, s in map(_load_model, args.model))
    groups = sorted(models)
    seed = manifest.record["seed"]
    words = test.document_tokens()
    scores = np.empty((len(test.docs), len(groups)))
    used = {}
    for j, g in enumerate(groups):
        header, samples = models[g]
        if tuple(header["vocab_sizes"]) != test.vocab_sizes:
            raise DataError(f"model {g!r} was trained on vocabulary sizes {header['vocab_sizes']}")
        if args.max_samples and len(samples) > args.max_samples:
            keep = np.linspace(0, len(samples) - 1, args.max_samples).round().astype(int)
            samples = [samples[i] for i in keep]
        used[g] = len(samples)
        c = header["config"]
        scores[:, j] = score_documents(samples, words, header["scoring_shape"], c["mass_d"], c["conc_d"],
                                       S=args.inner, seed=seed, workers=args.workers)
    pred = assign_labels(scores, groups)
    manifest.record["config"] = {"estimator": ESTIMATOR, "inner_draws": args.inner,
                                 "samples_per_model": used, "tie_break": "lowest group id"}
    out = _mkdir(args.out)
    lines = ["doc_id,true_group,predicted," + ",".join(f"loglik_{g}" for g in groups)]
    for doc, p, row in zip(test.docs, pred, scores):
        lines.append(f"{doc.doc_id},{doc.group or ''},{p}," + ",".join(repr(float(v)) for v in row))
    manifest.output(out / "predictions.csv").write_text("\n".join(lines) + "\n")
    labelled = [(d.group, p) for d, p in zip(test.docs, pred) if d.group is not None]
    if labelled:
        all_groups = sorted(set(groups) | {t for t, _ in labelled})
        conf = Confusion.from_labels([t for t, _ in labelled], [p for _, p in labelled], all_groups)
        manifest.output(out / "confusion.csv").write_text(conf.to_csv())
        manifest.record["accuracy"] = conf.accuracy
    if args.baseline_train:
        train = Corpus.read(args.baseline_train, args.vocab)
        base = UnigramBaseline().fit(train)
        bpred = base.predict(test)
        if labelled:
            truth = [d.group for d in test.docs if d.group is not None]
            bp = [p for d, p in zip(test.docs, bpred) if d.group is not None]
            bconf = Confusion.from_labels(truth, bp, sorted(set(all_groups) | set(base.groups)))
            manifest.output(out / "baseline_confusion.csv").write_text(bconf.to_csv())
            manifest.record["baseline_accuracy"] = bconf.accuracy


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnbp", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("simulate-asymptotics", help="cluster-count growth experiment")
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--mass")
    a.add_argument("--conc")
    a.add_argument("--disc", help="comma-separated discounts (default 0,0.5)")
    a.add_argument("--r-min", dest="r_min")
    a.add_argument("--r-max", dest="r_max")
    a.add_argument("--n-r", dest="n_r", help="number of evenly spaced r values")
    a.add_argument("--replicates")
    a.add_argument("--eps", help="weight floor, or 'auto'")
    a.add_argument("--workers", type=int, default=1, help="threads over grid points")
    a.add_argument("--seed", type=int)

    t = sub.add_parser("make-toy-bars", help="write the toy bars corpus")
    t.add_argument("--out", required=True)
    t.add_argument("--vocab")
    t.add_argument("--topics", help="CSV of the ground-truth topics")
    t.add_argument("--docs", type=int, default=50)
    t.add_argument("--doc-len", dest="doc_len", type=int, default=100)
    t.add_argument("--seed", type=int)

    r = sub.add_parser("train", help="run the admixture sampler on a corpus")
    r.add_argument("corpus")
    r.add_argument("--out", required=True)
    r.add_argument("--vocab")
    r.add_argument("--config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--group", help="train on the documents of one group only")
    r.add_argument("--resume", action="store_true")
    r.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=100)
    r.add_argument("--seed", type=int)

    c = sub.add_parser("classify", help="label documents by the most likely group model")
    c.add_argument("corpus")
    c.add_argument("--model", action="append", required=True, metavar="GROUP=STORE")
    c.add_argument("--out", required=True)
    c.add_argument("--vocab")
    c.add_argument("--inner", type=int, default=100, help="inner Monte Carlo draws per sample")
    c.add_argument("--max-samples", dest="max_samples", type=int, default=100)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--baseline-train", dest="baseline_train",
                   help="labelled training corpus for the length-blind unigram baseline")
    c.add_argument("--seed", type=int)
    return p


_COMMANDS = {"simulate-asymptotics": cmd_simulate_asymptotics, "make-toy-bars": cmd_make_toy_bars,
             "train": cmd_train, "classify": cmd_classify}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        seed = args.seed if args.seed is not None else default_seed()
        manifest = Manifest(args.command, argv, seed)
        _COMMANDS[args.command](args, manifest)
        if args.command == "make-toy-bars":
            manifest.write(str(args.out) + ".manifest.json")
        else:
            manifest.write(Path(args.out) / "manifest.json")
    except ParameterError as exc:
        print(f"bnbp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError) as exc:
        print(f"bnbp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BnbpError as exc:
        print(f"bnbp: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
