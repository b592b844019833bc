"""Expected cluster and data-point counts for the (three-parameter) BNBP,
DP/Pitman-Yor comparators, and Monte Carlo growth experiments.

``r`` is the negative binomial shape and ``mass``/``conc``/``disc`` are the
beta process parameters.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np
from scipy import integrate, special

from .crm import BpParams, bp_expected_dropped_clusters, bp_table
from .errors import DivergenceError, DomainError, ParameterError

SERIES_TOL = 1e-10


def _check_bp(mass, conc, disc=0.0):
    if not mass > 0:
        raise ParameterError("mass must be positive")
    if not 0 <= disc < 1:
        raise ParameterError("discount must lie in [0, 1)")
    if not conc > -disc or (disc == 0 and not conc > 0):
        raise ParameterError("concentration must exceed -discount")


def _log_bp_norm(conc, disc):
    return special.gammaln(1 + conc) - special.gammaln(1 - disc) - special.gammaln(conc + disc)


# ---------------------------------------------------------------------------
# Expected number of data points


def _log_gamma_ratio_term(n, r, conc):
    return special.gammaln(n + r) - special.gammaln(n + r + conc)


def expected_points_bnbp_series(r: float, mass: float, conc: float, tol: float = SERIES_TOL):
    """Series ``mass*conc * G(r+conc)/G(r) * sum_{n>=1} G(n+r)/G(n+r+conc)``.

    Terms are summed in blocks until the remainder, evaluated through the
    telescoping identity
    ``G(y)/G(y+c) = [G(y)/G(y+c-1) - G(y+1)/G(y+c)] / (c-1)``,
    falls below ``tol`` relative to the partial sum; the remainder is then
    added. Returns ``(value, remainder, n_terms)``.
    """
    _check_bp(mass, conc)
    if not r > 0:
        raise ParameterError("r must be positive")
    if conc <= 1:
        raise DivergenceError("expected number of data points is infinite for conc <= 1")
    partial = 0.0
    n0, block = 1, 1024
    while True:
        n = np.arange(n0, n0 + block, dtype=float)
        partial += float(np.exp(_log_gamma_ratio_term(n, r, conc)).sum())
        n0 += block
        # sum_{n >= n0} G(n+r)/G(n+r+c) = G(n0+r) / ((c-1) G(n0+r+c-1))
        remainder = math.exp(special.gammaln(n0 + r) - special.gammaln(n0 + r + conc - 1)) / (conc - 1)
        if remainder < tol * partial or n0 > 1 << 22:
            break
        block *= 2
    prefactor = mass * conc * math.exp(special.gammaln(r + conc) - special.gammaln(r))
    return prefactor * (partial + remainder), prefactor * remainder, n0 - 1


def expected_points_bnbp(r: float, mass: float, conc: float) -> float:
    """Expected number of data points from a BNBP (exact)."""
    return expected_points_bnbp_series(r, mass, conc)[0]


def expected_points_bnbp_asymptote(r, mass, conc):
    if conc <= 1:
        raise DivergenceError("expected number of data points is infinite for conc <= 1")
    return mass * conc / (conc - 1) * np.asarray(r, dtype=float)


def expected_points_3bnbp(r: float, mass: float, conc: float, disc: float) -> float:
    """Exact ``r * int b/(1-b) nu(db)`` for the three-parameter BP."""
    _check_bp(mass, conc, disc)
    if conc <= 1 - disc:
        raise DivergenceError("expected number of data points is infinite for conc <= 1 - disc")
    log_c = math.log(mass) + _log_bp_norm(conc, disc)
    return r * math.exp(log_c + special.betaln(1 - disc, conc + disc - 1))


def expected_points_3bnbp_asymptote(r, mass, conc, disc):
    if conc <= 1 - disc:
        raise DivergenceError("expected number of data points is infinite for conc <= 1 - disc")
    return mass * conc / (conc + disc - 1) * np.asarray(r, dtype=float)


# ---------------------------------------------------------------------------
# Expected number of clusters


def expected_clusters_quadrature(r: float, mass: float, conc: float, disc: float = 0.0) -> float:
    """``int (1 - (1-b)^r) nu(db)`` by adaptive quadrature in ``log b``."""
    _check_bp(mass, conc, disc)
    log_c = math.log(mass) + _log_bp_norm(conc, disc)

    def f(t):
        b = math.exp(t)
        # (1 - (1-b)^r) * nu(b) * b
        hit = -math.expm1(r * math.log1p(-b)) if b < 1 else 1.0
        return hit * math.exp(log_c - disc * t + (conc + disc - 1) * math.log1p(-b)) if b < 1 else 0.0

    # split where 1-(1-b)^r turns over (b ~ 1/r) to help the adaptive rule
    knee = -math.log(max(r, 1.0))
    lo = min(knee - 60.0, -60.0)
    pieces = [lo, knee - 10.0, knee, min(knee + 5.0, -1e-3), -1e-12]
    pieces = sorted(set(p for p in pieces if p <= -1e-12))
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(f, a, b, epsrel=1e-12, epsabs=0.0, limit=400)
        total += val
    # b in (1 - 1e-12, 1), integrated in s = log(1-b); below exp(lo) the
    # integrand is at most r * C * b^{-disc}, negligible
    return total + _upper_tail(r, log_c, conc, disc)


def _upper_tail(r, log_c, conc, disc):
    def g(s):
        b = -math.expm1(s)
        hit = -math.expm1(r * s)
        return hit * math.exp(log_c - (1 + disc) * math.log(b) + (conc + disc) * s)

    val, _ = integrate.quad(g, -np.inf, math.log(1e-12), limit=200)
    return val


def expected_clusters_bnbp(r: float, mass: float, conc: float) -> float:
    """Expected number of BNBP clusters; closed-form harmonic sum for
    integer ``r``, quadrature otherwise."""
    _check_bp(mass, conc)
    if not r > 0:
        raise ParameterError("r must be positive")
    if float(r).is_integer():
        i = np.arange(int(r), dtype=float)
        return float(mass * conc * np.sum(1.0 / (conc + i)))
    return expected_clusters_quadrature(r, mass, conc)


def expected_clusters_bnbp_asymptote(r, mass, conc):
    return mass * conc * np.log(np.asarray(r, dtype=float))


def expected_size_j_bnbp(j: int, r: float, mass: float, conc: float) -> float:
    """Expected number of BNBP clusters of size ``j``:
    ``mass*conc * G(j+r)/(G(j+1)G(r)) * G(j)G(r+conc)/G(j+r+conc)``."""
    _check_bp(mass, conc)
    if j < 1:
        raise DomainError("cluster size must be at least 1")
    logv = (math.log(mass * conc) + special.gammaln(j + r) - special.gammaln(j + 1) - special.gammaln(r)
            + special.gammaln(j) + special.gammaln(r + conc) - special.gammaln(j + r + conc))
    return math.exp(logv)


def expected_size_j_bnbp_asymptote(j, mass, conc):
    return mass * conc / np.asarray(j, dtype=float)


def expected_clusters_3bnbp(r: float, mass: float, conc: float, disc: float) -> float:
    """Expected number of 3BNBP clusters, by quadrature of the intensity."""
    return expected_clusters_quadrature(r, mass, conc, disc)


def expected_clusters_3bnbp_asymptote(r, mass, conc, disc):
    if not 0 < disc < 1:
        raise ParameterError("discount must lie in (0, 1)")
    const = mass / disc * math.exp(special.gammaln(conc + 1) - special.gammaln(conc + disc))
    return const * np.asarray(r, dtype=float) ** disc


def expected_size_j_3bnbp(j: int, r: float, mass: float, conc: float, disc: float) -> float:
    """Exact expected number of 3BNBP clusters of size ``j``."""
    _check_bp(mass, conc, disc)
    if j < 1:
        raise DomainError("cluster size must be at least 1")
    logv = (math.log(mass) + _log_bp_norm(conc, disc)
            + special.gammaln(j + r) - special.gammaln(j + 1) - special.gammaln(r)
            + special.gammaln(j - disc) + special.gammaln(r + conc + disc) - special.gammaln(j + r + conc))
    return math.exp(logv)


def expected_size_j_3bnbp_asymptote(j, r, mass, conc, disc):
    j = np.asarray(j, dtype=float)
    const = mass * np.exp(_log_bp_norm(conc, disc) + special.gammaln(j - disc) - special.gammaln(j + 1))
    return const * np.asarray(r, dtype=float) ** disc


# ---------------------------------------------------------------------------
# Growth-law constants versus the expected number of data points


def composite_constants(mass: float, conc: float, disc: float = 0.0, j: int = 1) -> Dict[str, float]:
    """Constants of the cluster-count laws as functions of the expected
    number of points ``E[N]``, assembled from the laws in ``r``: if
    ``E[K] ~ A r^a`` and ``E[N] ~ B r`` then ``E[K] ~ A B^{-a} E[N]^a``.
    For ``disc == 0`` the log law gives ``E[K] ~ mass*conc * log E[N]``
    (the additive ``log B`` is lower order)."""
    if disc == 0:
        return {"clusters": mass * conc, "size_j": mass * conc / j}
    b = mass * conc / (conc + disc - 1)
    a_clusters = float(expected_clusters_3bnbp_asymptote(1.0, mass, conc, disc))
    a_size = float(expected_size_j_3bnbp_asymptote(j, 1.0, mass, conc, disc))
    return {"clusters": a_clusters * b ** -disc, "size_j": a_size * b ** -disc}


def reference_constants(mass: float, conc: float, disc: float = 0.0, j: int = 1) -> Dict[str, float]:
    """Closed forms of the same constants, written out directly as an
    independent check on :func:`composite_constants`."""
    g, t, a = mass, conc, disc
    if a == 0:
        return {"clusters": g * t, "size_j": g * t / j}
    ratio = ((t + a - 1) / t) ** a
    clusters = g ** (1 - a) / a * math.gamma(t + 1) / math.gamma(t + a) * ratio
    size_j = (g ** (1 - a) * math.gamma(t + 1) / (math.gamma(1 - a) * math.gamma(t + a))
             * math.gamma(j - a) / math.gamma(j + 1) * ratio)
    return {"clusters": clusters, "size_j": size_j}


# ---------------------------------------------------------------------------
# Dirichlet and Pitman-Yor comparators (fixed number of data points n)


def dp_expected_clusters(n: int, conc: float) -> float:
    i = np.arange(int(n), dtype=float)
    return float(np.sum(conc / (conc + i)))


def dp_expected_clusters_asymptote(n, conc):
    return conc * np.log(np.asarray(n, dtype=float))


def dp_expected_size_j(n: int, j: int, conc: float) -> float:
    """Ewens-formula expectation of the number of size-``j`` clusters."""
    if j > n:
        return 0.0
    return conc / j * math.exp(special.gammaln(n + conc - j) + special.gammaln(n + 1)
                               - special.gammaln(n + conc) - special.gammaln(n + 1 - j))


def dp_expected_size_j_asymptote(j, conc):
    return conc / np.asarray(j, dtype=float)


def pyp_expected_clusters(n: int, conc: float, disc: float) -> float:
    """Exact Pitman-Yor expectation
    ``G(conc+1) G(conc+disc+n) / (disc G(conc+disc) G(conc+n)) - conc/disc``."""
    if not 0 < disc < 1:
        raise ParameterError("discount must lie in (0, 1)")
    if conc == 0:
        return math.exp(special.gammaln(disc + n) - special.gammaln(n) - special.gammaln(1 + disc)) if n > 0 else 0.0
    return (math.exp(special.gammaln(conc + 1) + special.gammaln(conc + disc + n)
                     - special.gammaln(conc + disc) - special.gammaln(conc + n)) / disc - conc / disc)


def pyp_expected_clusters_asymptote(n, conc, disc):
    const = math.exp(special.gammaln(conc + 1) - special.gammaln(conc + disc)) / disc
    return const * np.asarray(n, dtype=float) ** disc


def pyp_expected_size_j_asymptote(n, j, conc, disc):
    j = np.asarray(j, dtype=float)
    const = np.exp(special.gammaln(conc + 1) - special.gammaln(1 - disc) - special.gammaln(conc + disc)
                   + special.gammaln(j - disc) - special.gammaln(j + 1))
    return const * np.asarray(n, dtype=float) ** disc


def crp_cluster_sizes(n: int, conc: float, disc: float, rng: np.random.Generator) -> np.ndarray:
    """Chinese restaurant (Pitman-Yor urn) seating of ``n`` customers."""
    if not 0 <= disc < 1 or not conc > -disc:
        raise ParameterError("need 0 <= disc < 1 and conc > -disc")
    sizes: List[int] = []
    u = rng.random(n)
    for i in range(n):
        k = len(sizes)
        p_new = (conc + disc * k) / (conc + i)
        if i == 0 or u[i] < p_new:
            sizes.append(1)
            continue
        # existing table with probability proportional to size - disc
        w = np.asarray(sizes, dtype=float) - disc
        idx = np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right")
        sizes[min(idx, k - 1)] += 1
    return np.asarray(sizes, dtype=int)


# ---------------------------------------------------------------------------
# Monte Carlo growth experiments


@dataclass
class GrowthTriple:
    r: float
    N: int
    K: int
    K_j: Dict[int, int] = field(default_factory=dict)

    def check(self) -> None:
        if self.K != sum(self.K_j.values()):
            raise DomainError("K != sum_j K_j")
        if self.N != sum(j * c for j, c in self.K_j.items()):
            raise DomainError("N != sum_j j K_j")


@dataclass
class GrowthLawFit:
    model: str
    x: str
    slope: float
    intercept: float
    residual: float
    exponent: float | None = None

    @property
    def prefactor(self) -> float:
        """Leading coefficient: ``exp(intercept)`` for the log-log fit, the
        slope otherwise."""
        if self.model == "power-law":
            return math.exp(self.intercept)
        return self.slope

    def to_text(self) -> str:
        rows = [("model", self.model), ("x", self.x), ("slope", repr(self.slope)),
                ("intercept", repr(self.intercept)), ("residual", repr(self.residual)),
                ("prefactor", repr(self.prefactor))]
        if self.exponent is not None:
            rows.append(("exponent", repr(self.exponent)))
        return "".join(f"{k} = {v}\n" for k, v in rows)


def auto_eps(params: BpParams, r: float, rel_tol: float = 1e-3) -> float:
    """Largest weight floor (power of ten, at most 1e-6) whose expected
    number of dropped clusters is below ``rel_tol`` of the expected total."""
    expected = expected_clusters_quadrature(r, params.mass, params.conc, params.disc)
    eps = 1e-6
    while eps > 1e-12 and bp_expected_dropped_clusters(params, eps, r) > rel_tol * expected:
        eps /= 10
    return eps


def _growth_point(r, ss, table, replicates) -> List[GrowthTriple]:
    rng = np.random.default_rng(ss)
    out = []
    for _ in range(replicates):
        b = table.sample(rng)
        counts = rng.negative_binomial(r, 1.0 - b)
        counts = counts[counts > 0]
        sizes, mult = np.unique(counts, return_counts=True)
        out.append(GrowthTriple(r, int(counts.sum()), int(len(counts)),
                                dict(zip(sizes.tolist(), mult.tolist()))))
    return out


def simulate_growth(r_grid: Sequence[float], mass: float, conc: float, disc: float = 0.0, *,
                    seed: int = 0, eps: float | None = None, replicates: int = 100,
                    warn_tol: float = 0.01, workers: int = 1) -> List[GrowthTriple]:
    """Draw a (three-parameter) BP and mark it with an NBP at each ``r``.

    Every grid point gets its own RNG stream spawned from ``seed``, so results
    do not depend on evaluation order or on ``workers`` (grid points run on a
    thread pool when it exceeds 1). With ``eps=None`` the weight floor is
    chosen per grid point by :func:`auto_eps`; otherwise a warning is issued
    when the expected number of dropped clusters exceeds ``warn_tol`` times
    the expected cluster count.
    """
    r_grid = [float(r) for r in r_grid]
    if any(not r > 0 for r in r_grid):
        raise ParameterError("r values must be positive")
    if replicates < 1:
        raise ParameterError("replicates must be at least 1")
    if mass == 0:
        return [GrowthTriple(r, 0, 0, {}) for r in r_grid for _ in range(replicates)]
    params = BpParams(mass, conc, disc)
    streams = np.random.SeedSequence(seed).spawn(len(r_grid))
    jobs = []
    for r in r_grid:
        e = auto_eps(params, r) if eps is None else eps
        if eps is not None:
            dropped = bp_expected_dropped_clusters(params, e, r)
            expected = expected_clusters_quadrature(r, mass, conc, disc)
            if dropped > warn_tol * expected:
                warnings.warn(f"r={r}: truncation at eps={e:g} drops {dropped:.3g} expected clusters "
                              f"of {expected:.3g}", RuntimeWarning, stacklevel=2)
        jobs.append((r, bp_table(mass, conc, disc, e)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _growth_point(j[0][0], j[1], j[0][1], replicates),
                                  zip(jobs, streams)))
    else:
        parts = [_growth_point(r, ss, t, replicates) for (r, t), ss in zip(jobs, streams)]
    return [t for part in parts for t in part]


_MODELS = ("log-linear", "power-law", "power-offset")


def fit_growth_law(triples: Iterable[GrowthTriple], model: str = "log-linear", x: str = "r",
                   aggregate: bool = True, exponent: float | None = None) -> GrowthLawFit:
    """Least squares fit of cluster count against ``x`` (``"r"`` or ``"N"``).

    ``log-linear``: ``K = a + b log x``; ``power-law``: ``log K = a + b log x``;
    ``power-offset``: ``K = a + b x^exponent`` with the exponent given. The
    last one estimates the leading coefficient of a power law without the
    bias the log-log intercept picks up from lower-order terms.
    With ``aggregate`` the fit uses the per-``r`` means of ``K`` and ``N``.
    """
    if model not in _MODELS:
        raise ParameterError(f"unknown model {model!r}")
    if x not in ("r", "N"):
        raise ParameterError("x must be 'r' or 'N'")
    triples = list(triples)
    if aggregate:
        groups: Dict[float, list] = {}
        for t in triples:
            groups.setdefault(t.r, []).append(t)
        xs = []
        ks = []
        for r, ts in sorted(groups.items()):
            xs.append(r if x == "r" else np.mean([t.N for t in ts]))
            ks.append(np.mean([t.K for t in ts]))
    else:
        xs = [t.r if x == "r" else t.N for t in triples]
        ks = [t.K for t in triples]
    xs = np.asarray(xs, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("x values must be positive for a logarithmic fit")
    if model == "power-law" and np.any(ks <= 0):
        raise DomainError("power-law fit needs positive cluster counts")
    if model == "power-offset":
        if exponent is None or not exponent > 0:
            raise ParameterError("power-offset fit needs a positive exponent")
        fit = _ols(xs ** exponent, ks, model, x)
        fit.exponent = float(exponent)
        return fit
    u = np.log(xs)
    y = np.log(ks) if model == "power-law" else ks
    return _ols(u, y, model, x)


def _ols(u, y, model, x) -> GrowthLawFit:
    if len(u) < 2 or np.ptp(u) == 0:
        raise DomainError("need at least two distinct x values")
    design = np.column_stack([np.ones_like(u), u])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return GrowthLawFit(model, x, float(coef[1]), float(coef[0]), float(np.sqrt(np.mean(resid ** 2))))


def write_triples_csv(triples: Sequence[GrowthTriple]) -> str:
    lines = ["r,N,K"] + [f"{t.r!r},{t.N},{t.K}" for t in triples]
    return "\n".join(lines) + "\n"


def write_size_table_csv(triples: Sequence[GrowthTriple]) -> str:
    """``r,j,K_j`` rows, one per replicate and observed size, in input order."""
    lines = ["r,j,K_j"]
    for t in triples:
        lines.extend(f"{t.r!r},{j},{c}" for j, c in sorted(t.K_j.items()))
    return "\n".join(lines) + "\n"
