"""Gibbs samplers for the hierarchical BNBP admixture model."""

from .config import SamplerConfig, heuristic_shape
from .state import HbnbpState, TokenData
from .kernels import gibbs_sweep, init_state, log_joint, used_components

__all__ = ["SamplerConfig", "heuristic_shape", "HbnbpState", "TokenData", "gibbs_sweep",
           "init_state", "log_joint", "used_components"]
