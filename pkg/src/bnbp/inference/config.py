"""Sampler configuration and the document shape heuristic."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from ..errors import ParameterError

MODES = ("exact", "finite")


def heuristic_shape(n_words, mass0: float, conc0: float):
    """Shape that makes ``n_words`` the expected document length under a
    single-level BNBP: ``n (conc0 - 1) / (conc0 mass0)``."""
    if not conc0 > 1:
        raise ParameterError("shape heuristic needs conc0 > 1")
    n = np.asarray(n_words, dtype=float)
    if np.any(n <= 0):
        raise ParameterError("documents must be nonempty")
    out = n * (conc0 - 1) / (conc0 * mass0)
    return float(out) if out.ndim == 0 else out


@dataclass
class SamplerConfig:
    # top-level and per-document beta process hyperparameters
    mass0: float = 3.0
    conc0: float = 3.0
    mass_d: float = 1.0
    conc_d: float = 10.0
    eta: float = 0.1
    # fixed negative binomial shape for every document; None -> heuristic
    shape: Optional[float] = None
    mode: str = "exact"
    n_components: int = 100          # finite mode
    init_components: int = 20        # exact mode starting size
    init_active: int = 1             # components that share the initial assignments
    max_components: int = 500        # exact mode hard cap
    grow: bool = True                # exact mode representation growth
    zeta_base: float = 1.5
    zeta0_base: float = 1.5
    mh_step: float = 0.5
    collapsed: bool = False
    iterations: int = 1000
    burn_in: Optional[int] = None    # None -> 20% of iterations
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("mass0", "conc0", "mass_d", "conc_d", "eta", "mh_step"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.shape is not None and not self.shape > 0:
            raise ParameterError("shape must be positive")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.mode == "finite" and not self.mass0 < self.n_components:
            raise ParameterError("finite mode needs mass0 < n_components")
        if self.zeta_base <= 1 or self.zeta0_base <= 1:
            raise ParameterError("slice decay bases must exceed 1")
        if min(self.n_components, self.init_components, self.max_components, self.init_active) < 1:
            raise ParameterError("component counts must be positive")
        if self.iterations < 0 or self.thin < 1:
            raise ParameterError("iterations must be >= 0 and thin >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in <= self.iterations:
            raise ParameterError("burn_in must lie in [0, iterations]")

    @property
    def effective_burn_in(self) -> int:
        return self.iterations // 5 if self.burn_in is None else self.burn_in

    def zeta(self, k) -> np.ndarray:
        """Per-document slice decay for 0-based component index ``k``."""
        return self.zeta_base ** -(np.asarray(k, dtype=float) + 1.0)

    def replace(self, **kw) -> "SamplerConfig":
        return dataclasses.replace(self, **kw)

    # flat key-value text ------------------------------------------------
    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "SamplerConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ParameterError(f"config line {lineno}: unknown key {key!r}")
            kw[key] = _parse(val, kinds[key], key)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse(val: str, kind, key):
    low = val.lower()
    try:
        if "bool" in str(kind):
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if "Optional" in str(kind) and low in ("none", ""):
            return None
        if "int" in str(kind):
            return int(val)
        if "float" in str(kind):
            return float(val)
        return val
    except ValueError:
        raise ParameterError(f"config key {key!r}: cannot parse {val!r}") from None
