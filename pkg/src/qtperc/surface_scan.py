"""Map the critical surface ``q(p)`` over a grid of fixed parameters.

Each grid point gets two numbers: a certified lower bound from
:func:`~qtperc.certificate.bisect_q_psi`, and a Monte Carlo transition
estimate, the ``q`` at which the one-arm probability at a fixed radius
crosses a threshold (0.5 by default).  The Monte Carlo proxy carries a
finite-size bias that is reported, not corrected.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from .certificate import bisect_q_psi
from .exact_engine import DEFAULT_ENUMERATION_LIMIT, ParamVector
from .graph_model import GraphSpec, vertex_orbits
from .monte_carlo import estimate_one_arm, replica_seed

DEFAULT_THRESHOLD = 0.5
NEAR_ONE = 0.9
PROXY_NOTE = (
    "q_mc is the q where P(x <-> shell of radius k) crosses the threshold at fixed k; "
    "it is a finite-size proxy with an uncorrected bias of order k^(-1/nu)"
)


@dataclass(frozen=True)
class TransitionEstimate:
    q: float
    error: float
    bracket: tuple[float, float]
    k: int
    replicas: int
    seed: int
    threshold: float
    evaluations: int
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        d["flags"] = list(self.flags)
        d["note"] = PROXY_NOTE
        return d


def mc_transition_estimate(
    spec: GraphSpec,
    p_fixed: Sequence[float],
    k: int,
    replicas: int,
    tol: float,
    seed: int,
    threshold: float = DEFAULT_THRESHOLD,
    threads: int = 1,
    slope_window: float = 0.02,
) -> TransitionEstimate:
    """Bisect on ``q`` for the crossing of the one-arm probability with ``threshold``.

    The one-arm probability is the maximum over vertex-type representatives.
    The same seed is used at every ``q``, so the estimated curve is monotone
    in ``q`` and bisection is well defined.  The error combines the final
    bracket half-width with the binomial noise at the threshold divided by a
    secant slope over ``q +- slope_window``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p_fixed = tuple(float(p) for p in p_fixed)
    reps = vertex_orbits(spec)
    evaluations = 0

    def one_arm(q):
        nonlocal evaluations
        evaluations += 1
        params = ParamVector.from_parts(p_fixed, q)
        return max(
            estimate_one_arm(spec, params, x, k, replicas, seed, threads=threads).mean
            for x in reps
        )

    if one_arm(0.0) >= threshold:
        return TransitionEstimate(0.0, 0.0, (0.0, 0.0), k, replicas, seed, threshold,
                                  evaluations, ("crosses_at_zero",))
    if one_arm(1.0) < threshold:
        return TransitionEstimate(1.0, 0.0, (1.0, 1.0), k, replicas, seed, threshold,
                                  evaluations, ("no_crossing",))
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if one_arm(mid) < threshold:
            lo = mid
        else:
            hi = mid
    q = 0.5 * (lo + hi)
    a, b = max(0.0, q - slope_window), min(1.0, q + slope_window)
    slope = (one_arm(b) - one_arm(a)) / (b - a)
    noise = math.sqrt(threshold * (1.0 - threshold) / replicas)
    q_noise = noise / slope if slope > 0 else math.inf
    error = math.hypot(0.5 * (hi - lo), q_noise)
    flags = ("near_one",) if q >= NEAR_ONE else ()
    return TransitionEstimate(q, error, (lo, hi), k, replicas, seed, threshold, evaluations, flags)


@dataclass(frozen=True)
class SweepConfig:
    max_radius: int = 2
    cert_tol: float = 1e-4
    k: int = 32
    replicas: int = 20_000
    mc_tol: float = 0.005
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    limit: int = DEFAULT_ENUMERATION_LIMIT
    threads: int = 1


@dataclass(frozen=True)
class SweepRecord:
    p_fixed: tuple[float, ...]
    q_certified: float
    q_mc: float
    q_mc_err: float
    R_used: int
    k_used: int
    replicas: int
    seed: int
    flags: tuple[str, ...] = field(default=())

    def row(self) -> list:
        return (
            [repr(p) for p in self.p_fixed]
            + [repr(self.q_certified), repr(self.q_mc), repr(self.q_mc_err),
               self.R_used, self.k_used, self.replicas, ";".join(self.flags)]
        )


def csv_header(n_fixed: int) -> list[str]:
    return [f"p_{i}" for i in range(1, n_fixed + 1)] + [
        "q_certified", "q_mc", "q_mc_err", "R_used", "k_used", "replicas", "flags"
    ]


def _parse_row(row: dict, n_fixed: int, seed: int) -> SweepRecord:
    flags = tuple(f for f in row["flags"].split(";") if f)
    return SweepRecord(
        p_fixed=tuple(float(row[f"p_{i}"]) for i in range(1, n_fixed + 1)),
        q_certified=float(row["q_certified"]),
        q_mc=float(row["q_mc"]),
        q_mc_err=float(row["q_mc_err"]),
        R_used=int(row["R_used"]),
        k_used=int(row["k_used"]),
        replicas=int(row["replicas"]),
        seed=seed,
        flags=flags,
    )


def read_sweep_csv(path, n_fixed: int) -> list[SweepRecord]:
    with open(path, newline="") as fh:
        return [_parse_row(row, n_fixed, -1) for row in csv.DictReader(fh)]


def write_sweep_csv(path, records: Sequence[SweepRecord], n_fixed: int) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(n_fixed))
        for r in records:
            writer.writerow(r.row())
    os.replace(tmp, path)


def sweep_point(spec: GraphSpec, p_fixed: Sequence[float], config: SweepConfig, seed: int) -> SweepRecord:
    """Certified bound and Monte Carlo estimate at one grid point; failures become flags."""
    p_fixed = tuple(float(p) for p in p_fixed)
    flags = []
    q_cert = math.nan
    try:
        bound = bisect_q_psi(spec, p_fixed, config.max_radius, config.cert_tol,
                             limit=config.limit)
        q_cert = bound.q
        if bound.diagnostic:
            flags.append("cert:" + bound.diagnostic.replace(" ", "_"))
    except Exception as exc:  # recorded, a single point must not stop the sweep
        flags.append(f"cert_error:{type(exc).__name__}")
    q_mc = err = math.nan
    try:
        est = mc_transition_estimate(spec, p_fixed, config.k, config.replicas, config.mc_tol,
                                     seed, config.threshold, config.threads)
        q_mc, err = est.q, est.error
        flags.extend(est.flags)
    except Exception as exc:
        flags.append(f"mc_error:{type(exc).__name__}")
    if q_cert > q_mc + 3 * err:
        flags.append("certified_above_mc")
    return SweepRecord(p_fixed, q_cert, q_mc, err, config.max_radius, config.k,
                       config.replicas, seed, tuple(flags))


def sweep_surface(
    spec: GraphSpec,
    grid: Sequence[Sequence[float]],
    config: SweepConfig = SweepConfig(),
    out_csv=None,
) -> list[SweepRecord]:
    """Run :func:`sweep_point` over ``grid``, in grid order.

    Grid point ``i`` uses seed ``replica_seed(config.seed, i)``.  With
    ``out_csv`` the table is rewritten after every point, and points already
    present in an existing file are reused, so an interrupted sweep resumes
    where it stopped.  A JSON sidecar ``<out_csv>.json`` records the config.
    """
    n_fixed = spec.colour_count - 1
    grid = [tuple(float(p) for p in point) for point in grid]
    for point in grid:
        if len(point) != n_fixed:
            raise ValueError(f"grid point {point} needs {n_fixed} coordinates")
    pending = {}
    if out_csv is not None and os.path.exists(out_csv):
        for rec in read_sweep_csv(out_csv, n_fixed):
            if rec.k_used == config.k and rec.R_used == config.max_radius:
                pending[rec.p_fixed] = rec
    records = []
    for i, point in enumerate(grid):
        seed = replica_seed(config.seed, i)
        rec = pending.pop(point, None)
        if rec is not None:
            rec = replace(rec, seed=seed)
        else:
            rec = sweep_point(spec, point, config, seed)
        records.append(rec)
        if out_csv is not None:
            # rows not reached yet stay in the file so a second interruption loses nothing
            write_sweep_csv(out_csv, records + list(pending.values()), n_fixed)
    if out_csv is not None:
        write_sweep_csv(out_csv, records, n_fixed)
        with open(f"{out_csv}.json", "w") as fh:
            json.dump(
                {
                    "spec": spec.to_dict(),
                    "spec_hash": spec.spec_hash(),
                    "config": asdict(config),
                    "grid": [list(p) for p in grid],
                    "point_seeds": [r.seed for r in records],
                    "note": PROXY_NOTE,
                },
                fh, indent=2, sort_keys=True,
            )
    return records
