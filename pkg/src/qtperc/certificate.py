"""Subcriticality certificates built from finite sets with psi < 1.

A certificate fixes, for every vertex-type representative ``x``, a finite
set ``S_x`` containing ``x`` with ``psi(x, S_x) <= 1 - eps``.  From it:

* the susceptibility is at most ``max |S_x| / (1 - max psi(x, S_x))``;
* ``P(x <-> shell of radius k*L) <= (1 - eps)^k``, where ``L`` is large
  enough that every outer endpoint of every boundary edge of ``S_x`` lies
  within distance ``L`` of ``x``.  For a ball ``S_x`` of radius ``r`` that is
  ``L = r + 1``.

Candidate sets are the balls of radius ``0..R`` around each representative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .exact_engine import (
    DEFAULT_ENUMERATION_LIMIT,
    EnumerationLimitError,
    ParamVector,
    psi_value,
)
from .graph_model import (
    DEFAULT_VERTEX_BUDGET,
    BudgetExceededError,
    GraphSpec,
    Region,
    ball_distances,
    generate_ball,
    set_radius,
    vertex_orbits,
    vertex_to_json,
)

DEFAULT_MARGIN_FLOOR = 1e-9


class CertificateError(ValueError):
    """A proposed set does not certify (psi is not below ``1 - margin_floor``)."""


@dataclass(frozen=True)
class CertificateEntry:
    representative: object
    vertices: tuple
    psi: float
    set_radius: int
    arm_step: int

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def margin(self) -> float:
        return 1.0 - self.psi


@dataclass(frozen=True)
class Certificate:
    params: ParamVector
    entries: tuple[CertificateEntry, ...]
    epsilon: float
    radius_L: int
    decay_rate_per_L: float
    susceptibility_bound: float
    enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT
    margin_floor: float = DEFAULT_MARGIN_FLOOR

    @property
    def max_psi(self) -> float:
        return max(e.psi for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "certified": True,
            "params": list(self.params.values),
            "entries": [
                {
                    "representative": vertex_to_json(e.representative),
                    "vertices": [vertex_to_json(v) for v in e.vertices],
                    "size": e.size,
                    "set_radius": e.set_radius,
                    "psi": e.psi,
                    "margin": e.margin,
                }
                for e in self.entries
            ],
            "epsilon": self.epsilon,
            "radius_L": self.radius_L,
            "decay_rate_per_L": self.decay_rate_per_L,
            "susceptibility_bound": self.susceptibility_bound,
            "enumeration_limit": self.enumeration_limit,
            "margin_floor": self.margin_floor,
        }


@dataclass(frozen=True)
class OrbitSearch:
    """What the ball search found around one representative."""

    representative: object
    psi_by_radius: tuple[tuple[int, float], ...]
    certifying_radius: int | None
    stopped_by: str | None = None

    @property
    def min_psi(self) -> float:
        return min((v for _, v in self.psi_by_radius), default=math.inf)

    def to_dict(self) -> dict:
        return {
            "representative": vertex_to_json(self.representative),
            "psi_by_radius": [[r, v] for r, v in self.psi_by_radius],
            "certifying_radius": self.certifying_radius,
            "min_psi": self.min_psi if self.psi_by_radius else None,
            "stopped_by": self.stopped_by,
        }


@dataclass(frozen=True)
class CertificationReport:
    params: ParamVector
    max_radius: int
    orbits: tuple[OrbitSearch, ...]
    certificate: Certificate | None = None

    @property
    def certified(self) -> bool:
        return self.certificate is not None

    def to_dict(self) -> dict:
        doc = {
            "certified": self.certified,
            "params": list(self.params.values),
            "max_radius": self.max_radius,
            "candidate_family": "balls",
            "orbits": [o.to_dict() for o in self.orbits],
        }
        if self.certificate is not None:
            doc["certificate"] = self.certificate.to_dict()
        return doc


def _arm_step(spec, x, region, radius, budget):
    """Largest distance from ``x`` of an outer endpoint of a boundary edge."""
    if not region.boundary_edges:
        return max(radius, 1)
    dist = ball_distances(spec, x, radius + 1, budget)
    return max(dist[z] for _, z, _ in region.boundary_edges)


def _assemble(spec, params, chosen, limit, margin_floor, budget):
    entries = []
    for x, region, psi in chosen:
        r = set_radius(spec, x, region.vertices)
        entries.append(
            CertificateEntry(
                representative=x,
                vertices=tuple(sorted(region.vertices)),
                psi=psi,
                set_radius=r,
                arm_step=_arm_step(spec, x, region, r, budget),
            )
        )
    max_psi = max(e.psi for e in entries)
    epsilon = 1.0 - max_psi
    return Certificate(
        params=params,
        entries=tuple(entries),
        epsilon=epsilon,
        radius_L=max(1, max(e.arm_step for e in entries)),
        decay_rate_per_L=-math.log(1.0 - epsilon) if epsilon < 1.0 else math.inf,
        susceptibility_bound=max(e.size for e in entries) / epsilon,
        enumeration_limit=limit,
        margin_floor=margin_floor,
    )


def certify_regions(
    spec: GraphSpec,
    params: ParamVector,
    regions: Mapping,
    margin_floor: float = DEFAULT_MARGIN_FLOOR,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    budget: int = DEFAULT_VERTEX_BUDGET,
) -> Certificate:
    """Build a certificate from user-chosen sets, one per representative.

    ``regions`` maps every representative from :func:`vertex_orbits` to a
    :class:`Region` of ``spec`` containing it.

    Raises
    ------
    CertificateError
        If a representative is missing or its set has ``psi >= 1 - margin_floor``.
    """
    params.check_colours(spec.colour_count)
    chosen = []
    for x in vertex_orbits(spec):
        if x not in regions:
            raise CertificateError(f"no set given for representative {x!r}")
        region = regions[x]
        psi = psi_value(region, params, x, limit=limit).value
        if not psi < 1.0 - margin_floor:
            raise CertificateError(f"psi = {psi!r} does not certify at {x!r}")
        chosen.append((x, region, psi))
    return _assemble(spec, params, chosen, limit, margin_floor, budget)


def find_certifying_sets(
    spec: GraphSpec,
    params,
    max_radius: int,
    margin_floor: float = DEFAULT_MARGIN_FLOOR,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    budget: int = DEFAULT_VERTEX_BUDGET,
    threads: int = 1,
) -> CertificationReport:
    """Search balls of radius ``0..max_radius`` for sets with ``psi < 1``.

    For each representative the smallest certifying radius is kept.  When
    some representative has no certifying ball, the report carries the psi
    values seen and the reason the search stopped, and no certificate.
    """
    if max_radius < 0:
        raise ValueError("max_radius must be non-negative")
    params = params if isinstance(params, ParamVector) else ParamVector(tuple(params))
    params.check_colours(spec.colour_count)
    orbits = []
    chosen = []
    for x in vertex_orbits(spec):
        seen = []
        hit = None
        stopped = None
        for r in range(max_radius + 1):
            try:
                region = generate_ball(spec, x, r, budget)
                psi = psi_value(region, params, x, limit=limit, threads=threads).value
            except (EnumerationLimitError, BudgetExceededError) as exc:
                stopped = str(exc)
                break
            seen.append((r, psi))
            if psi < 1.0 - margin_floor:
                hit = (x, region, psi)
                break
        orbits.append(OrbitSearch(x, tuple(seen), len(seen) - 1 if hit else None, stopped))
        if hit is not None:
            chosen.append(hit)
    cert = None
    if len(chosen) == len(orbits):
        cert = _assemble(spec, params, chosen, limit, margin_floor, budget)
    return CertificationReport(params, max_radius, tuple(orbits), cert)


def susceptibility_upper_bound(cert: Certificate) -> float:
    """Upper bound on ``sup_x E|C(x)|`` implied by the certificate."""
    return cert.susceptibility_bound


def one_arm_upper_bound(cert: Certificate, k: int) -> float:
    """Upper bound on ``P(x <-> shell of radius k)`` for every vertex ``x``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return (1.0 - cert.epsilon) ** (k // cert.radius_L)


@dataclass(frozen=True)
class QPsiBound:
    """Result of :func:`bisect_q_psi`.

    ``q`` certifies and ``q_fail`` (at most ``q + tol``) does not, unless the
    search hit an endpoint of ``[0, 1]``.
    """

    q: float
    q_fail: float | None
    p_fixed: tuple[float, ...]
    max_radius: int
    evaluations: int
    radii: tuple = ()
    diagnostic: str | None = None
    failure_report: CertificationReport | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "q_lower_bound": self.q,
            "q_fail": self.q_fail,
            "p_fixed": list(self.p_fixed),
            "max_radius": self.max_radius,
            "evaluations": self.evaluations,
            "certifying_radii": list(self.radii),
            "diagnostic": self.diagnostic,
        }


def bisect_q_psi(
    spec: GraphSpec,
    p_fixed: Sequence[float],
    max_radius: int,
    tol: float = 1e-4,
    margin_floor: float = DEFAULT_MARGIN_FLOOR,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    budget: int = DEFAULT_VERTEX_BUDGET,
    threads: int = 1,
) -> QPsiBound:
    """Largest ``q`` (to within ``tol``) at which the ball search certifies.

    Because psi is nondecreasing in ``q`` the certified set of ``q`` values
    is an interval ``[0, q*)``; bisection returns the lower end of the final
    bracket, a lower bound on the critical ``q`` at ``p_fixed``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p_fixed = tuple(float(p) for p in p_fixed)
    if len(p_fixed) != spec.colour_count - 1:
        raise ValueError(f"expected {spec.colour_count - 1} fixed parameters, got {len(p_fixed)}")
    evaluations = 0

    def attempt(q):
        nonlocal evaluations
        evaluations += 1
        return find_certifying_sets(
            spec, ParamVector.from_parts(p_fixed, q), max_radius,
            margin_floor=margin_floor, limit=limit, budget=budget, threads=threads,
        )

    def radii(report):
        return tuple(o.certifying_radius for o in report.orbits)

    low = attempt(0.0)
    if not low.certified:
        return QPsiBound(0.0, 0.0, p_fixed, max_radius, evaluations, (),
                         "certification fails already at q = 0", low)
    high = attempt(1.0)
    if high.certified:
        return QPsiBound(1.0, None, p_fixed, max_radius, evaluations, radii(high),
                         "certified at q = 1")
    lo, hi, best = 0.0, 1.0, low
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rep = attempt(mid)
        if rep.certified:
            lo, best = mid, rep
        else:
            hi = mid
    return QPsiBound(lo, hi, p_fixed, max_radius, evaluations, radii(best))
