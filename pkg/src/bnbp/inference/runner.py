"""Run a single chain with optional persistence and checkpointing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .config import SamplerConfig, heuristic_shape
from .kernels import gibbs_sweep, init_state, log_joint, used_components
from .predictive import PosteriorSample
from .state import HbnbpState, TokenData
from . import store as st

log = logging.getLogger(__name__)


@dataclass
class ChainResult:
    state: HbnbpState
    samples: List[PosteriorSample] = field(default_factory=list)
    trace: List[tuple] = field(default_factory=list)   # (iteration, used, log_joint, K)

    @property
    def used_trace(self) -> np.ndarray:
        return np.array([t[1] for t in self.trace])


def is_retained(iteration: int, cfg: SamplerConfig) -> bool:
    burn = cfg.effective_burn_in
    return iteration > burn and (iteration - burn) % cfg.thin == 0


def scoring_shape_for(data: TokenData, cfg: SamplerConfig) -> float:
    """Shape used when scoring new documents: the fixed shape if configured,
    otherwise the heuristic at the mean training document length."""
    if cfg.shape is not None:
        return float(cfg.shape)
    return float(heuristic_shape(data.doc_lengths.mean(), cfg.mass0, cfg.conc0))


def run_chain(data: TokenData, cfg: SamplerConfig, *, store_path=None, trace_path=None,
              checkpoint_path=None, checkpoint_every: int = 100, resume: bool = False,
              used_threshold: float = 0.01,
              callback: Optional[Callable[[HbnbpState], None]] = None) -> ChainResult:
    """Run ``cfg.iterations`` sweeps from a seeded start (or a checkpoint)."""
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        state, rng = st.load_checkpoint(checkpoint_path)
        log.info("resuming from iteration %d", state.iteration)
        if store_path is not None:
            st.truncate_store(store_path, state.iteration)
        if trace_path is not None and Path(trace_path).exists():
            lines = Path(trace_path).read_text().splitlines()
            keep = [lines[0]] + [l for l in lines[1:] if int(l.split(",")[0]) <= state.iteration]
            Path(trace_path).write_text("\n".join(keep) + "\n")
    else:
        rng = np.random.default_rng(cfg.seed)
        state = init_state(data, cfg, rng)
        if store_path is not None:
            Path(store_path).write_text("")
            st.append_record(store_path, st.header_record(cfg, data.vocab_sizes, data.n_docs,
                                                          scoring_shape_for(data, cfg)))
        if trace_path is not None:
            Path(trace_path).write_text("iteration,used_components,log_joint,K\n")
    result = ChainResult(state)
    if store_path is not None and resume:
        result.samples = st.load_store(store_path)[1]
    while state.iteration < cfg.iterations:
        gibbs_sweep(state, data, cfg, rng)
        it = state.iteration
        used = used_components(state.shared, used_threshold)
        lj = log_joint(state, data, cfg)
        result.trace.append((it, used, lj, state.K))
        if trace_path is not None:
            with open(trace_path, "a") as fh:
                fh.write(f"{it},{used},{lj!r},{state.K}\n")
        if is_retained(it, cfg):
            result.samples.append(PosteriorSample(it, state.shared.copy(), [t.copy() for t in state.topics]))
            if store_path is not None:
                st.append_record(store_path, st.sample_record(state, used=used, log_joint=lj))
        if checkpoint_path is not None and (it % checkpoint_every == 0 or it == cfg.iterations):
            st.save_checkpoint(checkpoint_path, state, rng)
        if callback is not None:
            callback(state)
    return result
