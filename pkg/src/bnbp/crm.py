"""Completely random measures: beta, three-parameter beta, reparameterized
beta, gamma, beta prime and Dirichlet processes, plus the maps between them.

Ordinary components are simulated by truncating the Levy intensity at a
weight floor ``eps``: the number of atoms above the floor is Poisson with
mean equal to the intensity mass of ``[eps, upper)``, and each weight is an
inverse-CDF draw from a quadrature table of the normalized restricted
intensity. Atom locations are uniform on [0, 1].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError, ParameterError, SingularityError
from .measures import AtomicMeasure

DEFAULT_EPS = 1e-6
QUAD_RTOL = 1e-10
_TABLE_POINTS = 20001


@dataclass(frozen=True)
class BpParams:
    """Beta process (``disc == 0``) or three-parameter beta process.

    ``fixed_atoms`` holds ``(location, rho)`` pairs; the atom weight is
    ``Beta(conc*mass*rho - disc, conc*(1 - mass*rho) + disc)``.
    """

    mass: float
    conc: float
    disc: float = 0.0
    fixed_atoms: Tuple[Tuple[object, float], ...] = ()
    base: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "fixed_atoms", tuple(tuple(a) for a in self.fixed_atoms))
        if not (self.mass >= 0 and math.isfinite(self.mass)):
            raise ParameterError(f"mass must be nonnegative, got {self.mass}")
        if not (0 <= self.disc < 1):
            raise ParameterError(f"discount must lie in [0, 1), got {self.disc}")
        if self.disc == 0 and not self.conc > 0:
            raise ParameterError(f"concentration must be positive, got {self.conc}")
        if not self.conc > -self.disc:
            raise ParameterError("concentration must exceed -discount")
        for loc, rho in self.fixed_atoms:
            if not 0 < self.mass * rho < 1:
                raise ParameterError(f"fixed atom {loc!r}: mass*rho must lie in (0, 1)")
            a, b = self.fixed_atom_beta(rho)
            if a < 0 or b < 0:
                raise ParameterError(f"fixed atom {loc!r}: beta parameters must be nonnegative")

    def fixed_atom_beta(self, rho: float) -> Tuple[float, float]:
        t, g, a = self.conc, self.mass, self.disc
        return t * g * rho - a, t * (1 - g * rho) + a


@dataclass(frozen=True)
class RbpParams:
    """Reparameterized beta process; fixed atoms are ``(location, rho, sigma)``
    with weight ``Beta(rho, sigma)``."""

    mass: float
    conc: float
    fixed_atoms: Tuple[Tuple[object, float, float], ...] = ()
    base: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "fixed_atoms", tuple(tuple(a) for a in self.fixed_atoms))
        if not (self.mass > 0 and self.conc > 0):
            raise ParameterError("mass and concentration must be positive")
        locs = [a[0] for a in self.fixed_atoms]
        if len(set(locs)) != len(locs):
            raise ParameterError("fixed atom locations must be distinct")
        for loc, rho, sigma in self.fixed_atoms:
            if not (rho > 0 and sigma > 0):
                raise ParameterError(f"fixed atom {loc!r}: rho and sigma must be positive")

    def fixed_dict(self) -> dict:
        return {loc: (rho, sigma) for loc, rho, sigma in self.fixed_atoms}


@dataclass(frozen=True)
class GapParams:
    """Gamma process with concentration ``conc`` and rate (inverse scale)
    ``rate``; fixed atoms ``(location, rho)`` have weight
    ``Gamma(conc*rho, rate)``."""

    conc: float
    rate: float = 1.0
    fixed_atoms: Tuple[Tuple[object, float], ...] = ()
    base: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "fixed_atoms", tuple(tuple(a) for a in self.fixed_atoms))
        if not (self.conc > 0 and self.rate > 0):
            raise ParameterError("gamma process concentration and rate must be positive")
        for loc, rho in self.fixed_atoms:
            if not rho > 0:
                raise ParameterError(f"fixed atom {loc!r}: rho must be positive")


# ---------------------------------------------------------------------------
# Levy intensities (densities with respect to the weight)


def bp_log_intensity(b, mass, conc, disc=0.0):
    """Log density of the (three-parameter) beta process Levy measure."""
    b = np.asarray(b, dtype=float)
    logc = math.log(mass) + _bp_log_norm(conc, disc)
    return logc - (1 + disc) * np.log(b) + (conc + disc - 1) * np.log1p(-b)


def _bp_log_norm(conc, disc):
    return special.gammaln(1 + conc) - special.gammaln(1 - disc) - special.gammaln(conc + disc)


def gap_log_intensity(g, conc, rate):
    g = np.asarray(g, dtype=float)
    return math.log(conc) - np.log(g) - rate * g


def bpp_log_intensity(w, mass, conc):
    w = np.asarray(w, dtype=float)
    return math.log(mass * conc) - np.log(w) - conc * np.log1p(w)


# ---------------------------------------------------------------------------
# Tabulated inverse-CDF sampling of a restricted intensity


class OrdinaryTable:
    """Poisson process on ``[eps, upper)`` for a tabulated intensity.

    ``log_g`` is the log intensity expressed in a working variable ``x``
    (already including the Jacobian), supported on ``[lo, hi]``;
    ``to_weight`` maps ``x`` to the atom weight.
    """

    def __init__(self, log_g: Callable, lo: float, hi: float, to_weight: Callable):
        self.to_weight = to_weight
        self.lo, self.hi = lo, hi
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                mass, err = integrate.quad(
                    lambda x: math.exp(log_g(x)), lo, hi, epsrel=QUAD_RTOL, epsabs=0.0, limit=500
                )
            except integrate.IntegrationWarning as exc:
                raise NumericError(f"intensity quadrature did not converge: {exc}") from exc
        if not math.isfinite(mass) or err > 1e-8 * max(mass, 1e-300):
            raise NumericError(f"intensity quadrature error too large ({err:g} on {mass:g})")
        self.mass = mass
        x = np.linspace(lo, hi, _TABLE_POINTS)
        dens = np.exp(log_g(x))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
        if not np.isfinite(cum[-1]) or cum[-1] <= 0:
            raise NumericError("degenerate intensity table")
        self._x = x
        self._cdf = cum / cum[-1]

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            n = rng.poisson(self.mass)
        u = rng.random(n)
        return self.to_weight(np.interp(u, self._cdf, self._x))


def _softplus(x):
    return np.logaddexp(0.0, x)


@lru_cache(maxsize=64)
def bp_table(mass: float, conc: float, disc: float, eps: float) -> OrdinaryTable:
    """Table for the beta-process intensity above ``eps``, in logit space."""
    if not 0 < eps < 1:
        raise ParameterError(f"weight floor must lie in (0, 1), got {eps}")
    logc = math.log(mass) + _bp_log_norm(conc, disc)
    decay = conc + disc

    def log_g(s):
        # nu(b) * b * (1 - b) with b = expit(s)
        log_b = -_softplus(-s)
        log_1mb = -_softplus(s)
        return logc - disc * log_b + decay * log_1mb

    lo = math.log(eps) - math.log1p(-eps)
    hi = max(lo + 1.0, 10.0, (logc - math.log(decay) + 40.0) / decay)
    hi = min(hi, 700.0)
    return OrdinaryTable(log_g, lo, hi, special.expit)


@lru_cache(maxsize=64)
def gap_table(conc: float, rate: float, eps: float) -> OrdinaryTable:
    if not eps > 0:
        raise ParameterError(f"weight floor must be positive, got {eps}")
    log_c = math.log(conc)

    def log_g(t):
        return log_c - rate * np.exp(t)

    hi = math.log(60.0 / rate)
    if hi <= math.log(eps):
        raise ParameterError("weight floor above the effective support of the intensity")
    return OrdinaryTable(log_g, math.log(eps), hi, np.exp)


@lru_cache(maxsize=64)
def bpp_table(mass: float, conc: float, eps: float) -> OrdinaryTable:
    if not eps > 0:
        raise ParameterError(f"weight floor must be positive, got {eps}")
    log_c = math.log(mass * conc)

    def log_g(t):
        return log_c - conc * _softplus(t)

    hi = max(math.log(eps) + 1.0, (math.log(mass) + 14 * math.log(10)) / conc + 1.0)
    return OrdinaryTable(log_g, math.log(eps), min(hi, 700.0), np.exp)


# ---------------------------------------------------------------------------
# Samplers


def _locations(rng, n):
    return rng.random(n)


def _with_fixed(ordinary: np.ndarray, rng, fixed_locs: Sequence, fixed_weights: Sequence,
                dropped: float) -> AtomicMeasure:
    locs = _locations(rng, len(ordinary))
    if len(fixed_locs):
        locs = np.concatenate([np.asarray(list(fixed_locs), dtype=object), locs.astype(object)])
        weights = np.concatenate([np.asarray(fixed_weights, dtype=float), ordinary])
    else:
        weights = ordinary
    keep = weights > 0
    return AtomicMeasure(locs[keep], weights[keep], dropped_mass=dropped)


def sample_bp_size_biased(mass: float, conc: float, max_rounds: int,
                          rng: np.random.Generator) -> AtomicMeasure:
    """Size-biased beta process draw over rounds ``0..max_rounds-1``.

    Round ``i`` contributes ``Poisson(conc*mass/(conc+i))`` atoms with weights
    ``Beta(1, conc+i)``. The expected weight in the omitted rounds is
    ``sum_{i>=R} conc*mass/((conc+i)(conc+i+1)) = conc*mass/(conc+R)``
    (telescoping), stored as ``dropped_mass``.
    """
    if not (mass > 0 and conc > 0):
        raise ParameterError("mass and concentration must be positive")
    if max_rounds < 0:
        raise ParameterError("max_rounds must be nonnegative")
    rounds_idx = np.arange(max_rounds)
    counts = rng.poisson(conc * mass / (conc + rounds_idx))
    rounds = np.repeat(rounds_idx, counts)
    weights = rng.beta(1.0, conc + rounds) if len(rounds) else np.zeros(0)
    keep = weights > 0
    return AtomicMeasure(
        _locations(rng, int(keep.sum())),
        weights[keep],
        rounds=rounds[keep],
        dropped_mass=conc * mass / (conc + max_rounds),
    )


def round_counts(measure: AtomicMeasure, max_rounds: int) -> np.ndarray:
    """Number of atoms per round of a size-biased draw."""
    if measure.rounds is None:
        raise ParameterError("measure carries no round labels")
    return np.bincount(measure.rounds, minlength=max_rounds)[:max_rounds]


def sample_bp_threshold(params: BpParams, rng: np.random.Generator,
                        eps: float = DEFAULT_EPS) -> AtomicMeasure:
    """Beta or three-parameter beta process draw, ordinary atoms above ``eps``."""
    if not 0 < eps < 1:
        raise ParameterError(f"weight floor must lie in (0, 1), got {eps}")
    if params.mass == 0:
        ordinary = np.zeros(0)
        dropped = 0.0
    else:
        ordinary = bp_table(params.mass, params.conc, params.disc, eps).sample(rng)
        dropped = bp_dropped_mass(params, eps)
    fixed_w = [rng.beta(*params.fixed_atom_beta(rho)) for _, rho in params.fixed_atoms]
    return _with_fixed(ordinary, rng, [l for l, _ in params.fixed_atoms], fixed_w, dropped)


def sample_rbp_threshold(params: RbpParams, rng: np.random.Generator,
                         eps: float = DEFAULT_EPS) -> AtomicMeasure:
    """Reparameterized beta process draw: ``Beta(rho, sigma)`` fixed atoms plus
    the beta-process ordinary component above ``eps``."""
    ordinary = bp_table(params.mass, params.conc, 0.0, eps).sample(rng)
    fixed_w = [rng.beta(rho, sigma) for _, rho, sigma in params.fixed_atoms]
    dropped = bp_dropped_mass(BpParams(params.mass, params.conc), eps)
    return _with_fixed(ordinary, rng, [a[0] for a in params.fixed_atoms], fixed_w, dropped)


def sample_gap(params: GapParams, rng: np.random.Generator, eps: float = DEFAULT_EPS) -> AtomicMeasure:
    """Gamma process draw with ordinary atoms above ``eps``."""
    ordinary = gap_table(params.conc, params.rate, eps).sample(rng)
    fixed_w = [rng.gamma(params.conc * rho, 1.0 / params.rate) for _, rho in params.fixed_atoms]
    # expected mass below the floor: int_0^eps c exp(-rate g) dg
    dropped = params.conc * -math.expm1(-params.rate * eps) / params.rate
    return _with_fixed(ordinary, rng, [l for l, _ in params.fixed_atoms], fixed_w, dropped)


def sample_bpp(params: BpParams, rng: np.random.Generator, eps: float = DEFAULT_EPS) -> AtomicMeasure:
    """Beta prime process draw: ordinary intensity ``mass*conc*w^-1 (1+w)^-conc``
    above ``eps``; fixed atoms ``BetaPrime(conc*mass*rho, conc*(1-mass*rho))``."""
    if params.disc != 0:
        raise ParameterError("the beta prime process has no discount parameter")
    ordinary = bpp_table(params.mass, params.conc, eps).sample(rng)
    fixed_w = []
    for _, rho in params.fixed_atoms:
        x = rng.beta(*params.fixed_atom_beta(rho))
        fixed_w.append(x / (1 - x))
    return _with_fixed(ordinary, rng, [l for l, _ in params.fixed_atoms], fixed_w, 0.0)


def sample_dp(conc: float, rng: np.random.Generator, eps: float = DEFAULT_EPS) -> AtomicMeasure:
    """Dirichlet process draw obtained by normalizing a unit-rate gamma process."""
    return normalize_to_dp(sample_gap(GapParams(conc, 1.0), rng, eps))


# ---------------------------------------------------------------------------
# Truncation accounting


def bp_dropped_mass(params: BpParams, eps: float) -> float:
    """Expected total ordinary weight below ``eps``: ``int_0^eps b nu(db)``."""
    if params.mass == 0:
        return 0.0
    g, t, a = params.mass, params.conc, params.disc
    # int_0^eps b^{-a} (1-b)^{t+a-1} db = B(1-a, t+a) * I_eps(1-a, t+a)
    log_c = math.log(g) + _bp_log_norm(t, a)
    return math.exp(log_c + special.betaln(1 - a, t + a)) * special.betainc(1 - a, t + a, eps)


def bp_expected_dropped_counts(params: BpParams, eps: float, r: float) -> float:
    """Expected negative-binomial data points lost to truncation,
    ``E[sum_{b<eps} r b/(1-b)] = r int_0^eps b/(1-b) nu(db)``."""
    if params.mass == 0:
        return 0.0
    g, t, a = params.mass, params.conc, params.disc
    if t + a - 1 <= 0:
        return math.inf
    log_c = math.log(g) + _bp_log_norm(t, a)
    return r * math.exp(log_c + special.betaln(1 - a, t + a - 1)) * special.betainc(1 - a, t + a - 1, eps)


def bp_expected_dropped_clusters(params: BpParams, eps: float, r: float) -> float:
    """Expected clusters lost to truncation, ``int_0^eps (1-(1-b)^r) nu(db)``."""
    if params.mass == 0:
        return 0.0
    val, _ = integrate.quad(
        lambda b: -math.expm1(r * math.log1p(-b)) * math.exp(
            bp_log_intensity(b, params.mass, params.conc, params.disc)),
        0.0, eps, epsrel=1e-8, limit=200)
    return val


# ---------------------------------------------------------------------------
# Transformations between processes


def normalize_to_dp(g: AtomicMeasure) -> AtomicMeasure:
    """Divide weights by the total mass; locations are preserved."""
    total = g.weights.sum()
    if len(g) == 0 or not total > 0:
        raise DomainError("cannot normalize an empty or zero-mass measure")
    return AtomicMeasure(g.locations.copy(), g.weights / total)


def bp_to_beta_prime(b: AtomicMeasure) -> AtomicMeasure:
    """Map each weight ``b`` to ``b / (1 - b)``."""
    if np.any(b.weights >= 1):
        raise SingularityError("beta prime map is singular at weight 1")
    if np.any(b.weights <= 0):
        raise ParameterError("weights must be positive")
    return AtomicMeasure(b.locations.copy(), b.weights / (1 - b.weights))


def beta_prime_to_bp(w: AtomicMeasure) -> AtomicMeasure:
    """Inverse of :func:`bp_to_beta_prime`: ``w / (1 + w)``."""
    return AtomicMeasure(w.locations.copy(), w.weights / (1 + w.weights))


def _tau_draws(g: AtomicMeasure, conc: float, mass: float, rate: float, rng,
               fixed_rho: dict | None) -> np.ndarray:
    fixed_rho = fixed_rho or {}
    shapes = np.array([conc * (1 - mass * fixed_rho.get(loc, 0.0)) for loc in g.locations.tolist()])
    if np.any(shapes <= 0):
        raise ParameterError("tau shape conc*(1 - mass*rho) must be positive")
    tau = rng.gamma(shapes, 1.0 / rate) if len(shapes) else np.zeros(0)
    # guard against underflow to exactly zero for tiny shapes
    for _ in range(100):
        bad = tau <= 0
        if not bad.any():
            break
        tau[bad] = rng.gamma(shapes[bad], 1.0 / rate)
    else:
        raise NumericError("gamma auxiliary draw underflowed repeatedly")
    return tau


def gamma_ratio_to_beta_prime(g: AtomicMeasure, conc: float, mass: float, rng: np.random.Generator,
                              rate: float = 1.0, fixed_rho: dict | None = None) -> AtomicMeasure:
    """Beta prime process from a ``GaP(mass*conc, rate)`` draw: ``g_k / tau_k``
    with ``tau_k ~ Gamma(conc*(1 - mass*H{psi_k}), rate)``.

    ``fixed_rho`` maps fixed-atom locations to their base-measure mass ``rho``;
    all other locations are treated as continuous (``H{psi} = 0``).
    """
    tau = _tau_draws(g, conc, mass, rate, rng, fixed_rho)
    return AtomicMeasure(g.locations.copy(), g.weights / tau)


def gammas_to_bp(g: AtomicMeasure, conc: float, mass: float, rng: np.random.Generator,
                 rate: float = 1.0, fixed_rho: dict | None = None) -> AtomicMeasure:
    """Beta process from a ``GaP(mass*conc, rate)`` draw: ``g_k / (tau_k + g_k)``."""
    tau = _tau_draws(g, conc, mass, rate, rng, fixed_rho)
    return AtomicMeasure(g.locations.copy(), g.weights / (tau + g.weights))
