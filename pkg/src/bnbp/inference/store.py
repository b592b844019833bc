"""Posterior sample persistence.

Samples are newline-delimited JSON: a header record, then one record per
retained iteration with the top-level weights and the topics as sparse rows
(``{"i": [word ids], "v": [probabilities]}``, zero entries omitted). Full
sampler state for resuming is kept separately in an ``.npz`` checkpoint.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np

from ..errors import DataError
from .config import SamplerConfig
from .predictive import ESTIMATOR, PosteriorSample
from .state import HbnbpState

FORMAT = 1


def header_record(cfg: SamplerConfig, vocab_sizes, n_docs: int, scoring_shape: float, **extra) -> dict:
    rec = {"type": "header", "format": FORMAT, "config": dataclasses.asdict(cfg),
           "vocab_sizes": list(vocab_sizes), "n_docs": int(n_docs),
           "scoring_shape": float(scoring_shape), "estimator": ESTIMATOR}
    rec.update(extra)
    return rec


def sample_record(state: HbnbpState, **extra) -> dict:
    topics = []
    for k in range(state.K):
        rows = []
        for t in state.topics:
            nz = np.flatnonzero(t[k])
            rows.append({"i": nz.tolist(), "v": t[k, nz].tolist()})
        topics.append(rows)
    rec = {"type": "sample", "iteration": int(state.iteration), "K": int(state.K),
           "shared": state.shared.tolist(), "topics": topics}
    rec.update(extra)
    return rec


def append_record(path, rec: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def iter_records(path) -> Iterator[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise DataError(f"{path}:{lineno}: bad record ({exc.msg})") from None
    except OSError as exc:
        raise DataError(f"cannot read sample store: {exc}") from exc


def load_store(path) -> Tuple[dict, List[PosteriorSample]]:
    header, samples = None, []
    for rec in iter_records(path):
        if rec.get("type") == "header":
            header = rec
        elif rec.get("type") == "sample":
            if header is None:
                raise DataError(f"{path}: sample before header")
            samples.append(_to_sample(rec, header["vocab_sizes"]))
    if header is None:
        raise DataError(f"{path}: no header record")
    return header, samples


def _to_sample(rec: dict, vocab_sizes) -> PosteriorSample:
    K = rec["K"]
    topics = [np.zeros((K, V)) for V in vocab_sizes]
    try:
        for k, rows in enumerate(rec["topics"]):
            for f, row in enumerate(rows):
                topics[f][k, row["i"]] = row["v"]
        return PosteriorSample(int(rec["iteration"]), np.asarray(rec["shared"], dtype=float), topics)
    except (KeyError, IndexError, ValueError) as exc:
        raise DataError(f"malformed sample record: {exc}") from exc


def truncate_store(path, last_iteration: int) -> None:
    """Drop sample records beyond ``last_iteration`` (used when resuming)."""
    if not Path(path).exists():
        return
    keep = [r for r in iter_records(path) if r.get("type") != "sample" or r["iteration"] <= last_iteration]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for r in keep:
            fh.write(json.dumps(r, separators=(",", ":")) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: HbnbpState, rng: np.random.Generator) -> None:
    arrays = {"shared": state.shared, "doc_logit": state.doc_logit, "log_rates": state.log_rates,
              "assign": state.assign, "shapes": state.shapes, "n_fields": np.array(len(state.topics)),
              "iteration": np.array(state.iteration)}
    for f, t in enumerate(state.topics):
        arrays[f"topic{f}"] = t
    for name in ("rounds", "token_slice", "round_slice"):
        val = getattr(state, name)
        if val is not None:
            arrays[name] = val
    arrays["rng"] = np.array(json.dumps(rng.bit_generator.state))
    arrays["stats"] = np.array(json.dumps(state.stats))
    tmp = f"{path}.tmp.npz"
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path) -> Tuple[HbnbpState, np.random.Generator]:
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    topics = [z[f"topic{f}"] for f in range(int(z["n_fields"]))]
    opt = {n: (z[n] if n in z.files else None) for n in ("rounds", "token_slice", "round_slice")}
    state = HbnbpState(z["shared"], z["doc_logit"], z["log_rates"], z["assign"], topics, z["shapes"],
                       opt["rounds"], opt["token_slice"], opt["round_slice"], int(z["iteration"]),
                       json.loads(str(z["stats"])))
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(str(z["rng"]))
    return state, rng
