"""Posterior updates for beta-process priors under Bernoulli and negative
binomial process likelihoods.

Atom identity is exact location-label equality. Counts are kept as Python
numbers so that integer and ``fractions.Fraction`` inputs update exactly.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

from .crm import BpParams, RbpParams
from .errors import DomainError, ParameterError
from .measures import CountMeasure

OLD_REPEATED = "old-repeated"
OLD_UNREPEATED = "old-unrepeated"
NEW = "new"


@dataclass(frozen=True)
class PosteriorUpdateReport:
    """Posterior beta-process parameters with per-atom provenance.

    ``fixed_atoms`` rows are ``(location, rho_post, sigma_post)``; for the
    classic beta-process form ``sigma_post`` is ``None``.
    """

    conc: float
    mass: float
    fixed_atoms: tuple
    provenance: tuple

    def to_text(self) -> str:
        """Key-value text: one ``key = value`` per line, atoms as
        ``atom.<i> = <location> <rho> <sigma|-> <provenance>``."""
        lines = [f"conc = {self.conc!r}", f"mass = {self.mass!r}", f"n_atoms = {len(self.fixed_atoms)}"]
        for i, ((loc, rho, sigma), prov) in enumerate(zip(self.fixed_atoms, self.provenance)):
            s = "-" if sigma is None else repr(sigma)
            lines.append(f"atom.{i} = {loc} {rho!r} {s} {prov}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PosteriorUpdateReport":
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split(" = ", 1)
                kv[k] = v
        atoms, prov = [], []
        for i in range(int(kv["n_atoms"])):
            loc, rho, sigma, p = kv[f"atom.{i}"].rsplit(" ", 3)
            atoms.append((_parse_loc(loc), float(rho), None if sigma == "-" else float(sigma)))
            prov.append(p)
        return cls(float(kv["conc"]), float(kv["mass"]), tuple(atoms), tuple(prov))


def _parse_loc(s):
    try:
        return float(s) if "." in s or "e" in s else int(s)
    except ValueError:
        return s


def _tally(draws: Sequence[CountMeasure], fixed_locs, *, binary: bool):
    """Per-location count totals for fixed and novel locations."""
    fixed_set = set(fixed_locs)
    fixed_tot = {loc: 0 for loc in fixed_locs}
    novel: "OrderedDict[object, int]" = OrderedDict()
    for draw in draws:
        for loc, c in draw.as_dict().items():
            if c < 0:
                raise DomainError("counts must be nonnegative")
            if binary and c not in (0, 1):
                raise DomainError("Bernoulli process draws must be binary")
            if loc in fixed_set:
                fixed_tot[loc] += c
            else:
                novel[loc] = novel.get(loc, 0) + c
    return fixed_tot, novel


def bp_posterior_bernoulli(prior: BpParams, draws: Sequence[CountMeasure]) -> PosteriorUpdateReport:
    """Beta process posterior after ``N`` Bernoulli process draws."""
    if prior.disc != 0:
        raise ParameterError("Bernoulli conjugacy requires discount 0")
    n = len(draws)
    fixed_locs = [loc for loc, _ in prior.fixed_atoms]
    fixed_tot, novel = _tally(draws, fixed_locs, binary=True)
    conc = prior.conc + n
    mass = prior.mass * prior.conc / conc
    scale = conc * mass  # == prior.conc * prior.mass
    atoms, prov = [], []
    for loc, rho in prior.fixed_atoms:
        atoms.append((loc, rho + fixed_tot[loc] / scale, None))
        prov.append(OLD_REPEATED if fixed_tot[loc] > 0 else OLD_UNREPEATED)
    for loc, tot in novel.items():
        if tot <= 0:
            raise DomainError(f"novel location {loc!r} has zero total count")
        atoms.append((loc, tot / scale, None))
        prov.append(NEW)
    return PosteriorUpdateReport(conc, mass, tuple(atoms), tuple(prov))


def rbp_posterior_bernoulli(prior: RbpParams, draws: Sequence[CountMeasure]) -> RbpParams:
    n = len(draws)
    if n == 0:
        return prior
    fixed_locs = [a[0] for a in prior.fixed_atoms]
    fixed_tot, novel = _tally(draws, fixed_locs, binary=True)
    atoms = [(loc, rho + fixed_tot[loc], sigma + n - fixed_tot[loc])
             for loc, rho, sigma in prior.fixed_atoms]
    for loc, tot in novel.items():
        if tot <= 0:
            raise DomainError(f"novel location {loc!r} has zero total count")
        atoms.append((loc, tot, prior.conc + n - tot))
    conc = prior.conc + n
    return RbpParams(prior.mass * prior.conc / conc, conc, tuple(atoms), prior.base)


def rbp_posterior_negbin(prior: RbpParams, r, draws: Sequence[CountMeasure]) -> RbpParams:
    """Reparameterized beta process posterior after ``N`` negative binomial
    process draws sharing the shape ``r``.

    ``r`` may also be a sequence with one entry per draw, but all entries
    must be equal.
    """
    if isinstance(r, (list, tuple)):
        if len(r) != len(draws):
            raise ParameterError("one shape per draw required")
        if len(set(r)) > 1:
            raise ParameterError("heterogeneous shapes across draws are not supported")
        r = r[0] if r else 1
    if not r > 0:
        raise ParameterError("shape r must be positive")
    n = len(draws)
    if n == 0:
        return prior
    fixed_locs = [a[0] for a in prior.fixed_atoms]
    fixed_tot, novel = _tally(draws, fixed_locs, binary=False)
    atoms = [(loc, rho + fixed_tot[loc], sigma + r * n) for loc, rho, sigma in prior.fixed_atoms]
    for loc, tot in novel.items():
        if tot <= 0:
            raise DomainError(f"novel location {loc!r} has zero total count")
        atoms.append((loc, tot, prior.conc + r * n))
    conc = prior.conc + r * n
    return RbpParams(prior.mass * prior.conc / conc, conc, tuple(atoms), prior.base)


def rbp_report(prior: RbpParams, post: RbpParams) -> PosteriorUpdateReport:
    """Provenance-annotated report for an RBP update ``prior -> post``."""
    before = prior.fixed_dict()
    prov = []
    for loc, rho, sigma in post.fixed_atoms:
        if loc not in before:
            prov.append(NEW)
        else:
            prov.append(OLD_REPEATED if rho != before[loc][0] else OLD_UNREPEATED)
    return PosteriorUpdateReport(post.conc, post.mass, post.fixed_atoms, tuple(prov))
