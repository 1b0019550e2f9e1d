"""Seeded Monte Carlo bond percolation on finite regions.

Every replica owns a 64-bit stream seed derived from the master seed and the
replica index.  Every edge owns a 64-bit key hashed from its endpoints.  The
uniform draw of edge ``e`` in replica ``r`` is the SplitMix64 output at
counter ``key_e`` of stream ``seed_r``, so a configuration depends on
neither batching, thread count, execution order nor the simulation engine.
An edge of colour ``i`` is open when its uniform is below ``p_i``; reusing a
seed at different parameters therefore gives a monotone coupling (common
random numbers).

Two engines share those draws and return identical results:

* ``batch`` materializes the ball and labels connected components of the
  block-diagonal union of a whole batch of open subgraphs;
* ``explore`` grows only the open cluster of the root, drawing edges as they
  are touched.  It handles balls far too large to materialize (trees) as
  long as clusters stay small, and is the default on trees.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exact_engine import ParamVector
from .graph_model import (
    COLOURED_TREE,
    DEFAULT_VERTEX_BUDGET,
    GraphSpec,
    Region,
    ball_distances,
    generate_ball,
    tree_distance,
    vertex_orbits,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_BATCH_CELLS = 1 << 22
_SCALE = 1.0 / (1 << 53)

STATISTICS = ("one_arm", "chi_truncated", "theta_proxy", "pivotal_count", "crossing")


class FitError(ValueError):
    """Too few usable points for a decay-rate fit."""


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def replica_seeds(master_seed: int, start: int, stop: int) -> np.ndarray:
    """Stream seeds of replicas ``start..stop-1`` (see :func:`replica_seed`)."""
    base = _mix64(np.array([master_seed & _MASK64], dtype=np.uint64))[0]
    idx = np.arange(start + 1, stop + 1, dtype=np.uint64)
    return _mix64(base + idx * np.uint64(_GOLDEN))


def replica_seed(master_seed: int, replica_index: int) -> int:
    """Stream seed of one replica.

    ``mix64(mix64(master) + (index + 1) * golden)`` with the SplitMix64
    finalizer ``mix64``.  The finalizer is a bijection of 64-bit words and the
    golden-ratio constant is odd, so distinct indices below ``2**64`` never
    collide for a fixed master seed.
    """
    return int(replica_seeds(master_seed, replica_index, replica_index + 1)[0])


def edge_key(u, v) -> int:
    """64-bit key of the undirected edge ``{u, v}``, stable across runs."""
    a, b = (u, v) if u <= v else (v, u)
    digest = hashlib.blake2b(repr((a, b)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_uniforms(seeds: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Uniforms in ``[0, 1)``; entry ``(r, e)`` is stream ``seeds[r]`` at counter ``keys[e]``."""
    raw = _mix64(seeds[:, None] + keys[None, :] * np.uint64(_GOLDEN))
    return (raw >> np.uint64(11)).astype(np.float64) * _SCALE


def _mix64_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def edge_uniform(seed: int, key: int) -> float:
    """Scalar version of :func:`stream_uniforms`."""
    return (_mix64_int((seed + key * _GOLDEN) & _MASK64) >> 11) * _SCALE


@dataclass(frozen=True)
class SimRegion:
    """A region prepared for simulation, with a fixed edge order.

    ``targets`` are the vertices whose connection to ``root`` is tested (the
    shell for one-arm events).
    """

    region: Region
    vertices: tuple
    edges: np.ndarray
    colours: np.ndarray
    keys: np.ndarray
    root: int
    targets: np.ndarray

    @classmethod
    def from_region(cls, region: Region, root, targets=()) -> "SimRegion":
        vertices = tuple(sorted(region.vertices))
        index = {v: i for i, v in enumerate(vertices)}
        edges = np.array(
            [(index[u], index[v]) for u, v, _ in region.internal_edges], dtype=np.int64
        ).reshape(-1, 2)
        colours = np.array([c for _, _, c in region.internal_edges], dtype=np.int64)
        keys = np.array([edge_key(u, v) for u, v, _ in region.internal_edges], dtype=np.uint64)
        tgt = np.array(sorted(index[t] for t in targets), dtype=np.int64)
        return cls(region, vertices, edges, colours, keys, index[root], tgt)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def edge_probs(self, params: ParamVector) -> np.ndarray:
        table = np.array((0.0,) + params.values)
        if self.m and self.colours.max() >= len(table):
            raise ValueError("a region edge has a colour with no parameter")
        return table[self.colours]


def ball_sim_region(spec: GraphSpec, x, k: int, budget: int = DEFAULT_VERTEX_BUDGET) -> SimRegion:
    """The ball of radius ``k`` around ``x``, targeting its shell."""
    dist = ball_distances(spec, x, k, budget)
    region = generate_ball(spec, x, k, budget)
    return SimRegion.from_region(region, x, [v for v, d in dist.items() if d == k])


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    replicas: int
    seed: int
    statistic: str
    spec_hash: str | None = None
    params: tuple[float, ...] | None = None
    radius: int | None = None

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "mean": self.mean,
            "std_error": self.std_error,
            "replicas": self.replicas,
            "seed": self.seed,
            "spec_hash": self.spec_hash,
            "params": list(self.params) if self.params is not None else None,
            "radius": self.radius,
        }


def summarize(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error (sample std over ``sqrt(n)``), order-exact via fsum."""
    n = len(values)
    vals = [float(v) for v in values]
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class _Batch:
    """Component labels of one batch of replicas, at one parameter point."""

    labels: np.ndarray  # (B, n) global component ids
    open: np.ndarray  # (B, m)
    count: int

    def root_labels(self, sim):
        return self.labels[:, sim.root]

    def reaches_targets(self, sim):
        if sim.targets.size == 0:
            return np.zeros(self.labels.shape[0], dtype=bool)
        return np.any(self.labels[:, sim.targets] == self.root_labels(sim)[:, None], axis=1)

    def cluster_sizes(self, sim):
        return np.sum(self.labels == self.root_labels(sim)[:, None], axis=1)


def _label(sim: SimRegion, open_mask: np.ndarray) -> _Batch:
    B = open_mask.shape[0]
    n = sim.n
    r, e = np.nonzero(open_mask)
    rows = r * n + sim.edges[e, 0]
    cols = r * n + sim.edges[e, 1]
    graph = csr_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(B * n, B * n)
    )
    count, labels = connected_components(graph, directed=False)
    return _Batch(labels.reshape(B, n), open_mask, count)


def _run(
    sim: SimRegion,
    replicas: int,
    seed: int,
    per_batch: Callable[[np.ndarray], np.ndarray],
    threads: int = 1,
    batch_size: int | None = None,
    width: int = 1,
) -> np.ndarray:
    """Evaluate ``per_batch(uniforms)`` over all replicas; rows stay in replica order."""
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    if batch_size is None:
        batch_size = max(1, _BATCH_CELLS // max(sim.m, sim.n, 1))
    bounds = [(s, min(replicas, s + batch_size)) for s in range(0, replicas, batch_size)]
    out = np.empty((replicas, width)) if width > 1 else np.empty(replicas)

    def work(b):
        start, stop = b
        u = stream_uniforms(replica_seeds(seed, start, stop), sim.keys)
        out[start:stop] = per_batch(u)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, bounds))
    else:
        for b in bounds:
            work(b)
    return out


def _params(spec, params):
    params = params if isinstance(params, ParamVector) else ParamVector(tuple(params))
    params.check_colours(spec.colour_count)
    return params


def _root(spec, x):
    return vertex_orbits(spec)[0] if x is None else x


def simulate_indicator(
    sim: SimRegion, params: ParamVector, replicas: int, seed: int, threads: int = 1
) -> np.ndarray:
    """Per-replica indicator of ``root <-> targets`` inside ``sim``."""
    probs = sim.edge_probs(params)
    return _run(
        sim, replicas, seed,
        lambda u: _label(sim, u < probs).reaches_targets(sim).astype(float),
        threads=threads,
    )


def estimate_connection(
    region: Region, params, x, targets, replicas: int, seed: int, threads: int = 1
) -> MCEstimate:
    """Frequency of ``x`` joining any of ``targets`` by open edges inside ``region``."""
    params = params if isinstance(params, ParamVector) else ParamVector(tuple(params))
    sim = SimRegion.from_region(region, x, targets)
    mean, se = summarize(simulate_indicator(sim, params, replicas, seed, threads))
    return MCEstimate(mean, se, replicas, seed, "crossing", params=params.values)


class _Explorer:
    """Grows the open cluster of ``x`` inside the ball of radius ``k``, one replica at a time."""

    def __init__(self, spec: GraphSpec, x, k: int, params: ParamVector, budget: int):
        self.spec = spec
        self.x = x
        self.k = k
        self.p = (0.0,) + params.values
        self._keys: dict = {}
        if spec.kind == COLOURED_TREE:
            self.distance = lambda v: tree_distance(x, v)
        else:
            dist = ball_distances(spec, x, k, budget)
            self.distance = lambda v: dist.get(v, k + 1)

    def _key(self, v, w):
        pair = (v, w) if v <= w else (w, v)
        key = self._keys.get(pair)
        if key is None:
            key = self._keys[pair] = edge_key(v, w)
        return key

    def run(self, seed: int, stop_at_shell: bool):
        """Cluster size, or (with ``stop_at_shell``) whether the shell is reached."""
        if stop_at_shell and self.k == 0:
            return True
        cluster = {self.x}
        stack = [self.x]
        while stack:
            v = stack.pop()
            for w, c in self.spec.neighbors(v):
                if w in cluster:
                    continue
                dw = self.distance(w)
                if dw > self.k:
                    continue
                if edge_uniform(seed, self._key(v, w)) < self.p[c]:
                    if stop_at_shell and dw == self.k:
                        return True
                    cluster.add(w)
                    stack.append(w)
        return False if stop_at_shell else len(cluster)


def _choose_engine(spec, engine):
    if engine not in ("auto", "batch", "explore"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine != "auto":
        return engine
    # tree balls grow exponentially; lattice balls are cheap to materialize
    return "explore" if spec.kind == COLOURED_TREE else "batch"


def _explore_values(spec, x, k, params, replicas, seed, budget, stop_at_shell):
    explorer = _Explorer(spec, x, k, params, budget)
    seeds = replica_seeds(seed, 0, replicas)
    return np.array([float(explorer.run(int(s), stop_at_shell)) for s in seeds])


def estimate_one_arm(
    spec: GraphSpec,
    params,
    x=None,
    k: int = 1,
    replicas: int = 1000,
    seed: int = 0,
    threads: int = 1,
    budget: int = DEFAULT_VERTEX_BUDGET,
    statistic: str = "one_arm",
    engine: str = "auto",
) -> MCEstimate:
    """Estimate ``P(x <-> shell of radius k)`` with free boundary conditions on the ball."""
    params = _params(spec, params)
    x = spec.canonical(_root(spec, x))
    if k < 0:
        raise ValueError("k must be non-negative")
    if _choose_engine(spec, engine) == "explore":
        values = _explore_values(spec, x, k, params, replicas, seed, budget, True)
    elif k == 0:
        values = np.ones(replicas)
    else:
        sim = ball_sim_region(spec, x, k, budget)
        values = simulate_indicator(sim, params, replicas, seed, threads)
    mean, se = summarize(values)
    return MCEstimate(mean, se, replicas, seed, statistic, spec.spec_hash(), params.values, k)


def estimate_theta_proxy(spec, params, x=None, k=1, replicas=1000, seed=0, threads=1,
                         budget=DEFAULT_VERTEX_BUDGET, engine="auto") -> MCEstimate:
    """One-arm probability at radius ``k``, labelled as a proxy for theta."""
    return estimate_one_arm(spec, params, x, k, replicas, seed, threads, budget,
                            "theta_proxy", engine)


def estimate_chi_truncated(
    spec: GraphSpec,
    params,
    x=None,
    m: int = 1,
    replicas: int = 1000,
    seed: int = 0,
    threads: int = 1,
    budget: int = DEFAULT_VERTEX_BUDGET,
    engine: str = "auto",
) -> MCEstimate:
    """Mean size of the open cluster of ``x`` inside the ball of radius ``m``."""
    params = _params(spec, params)
    x = spec.canonical(_root(spec, x))
    if m < 0:
        raise ValueError("m must be non-negative")
    if _choose_engine(spec, engine) == "explore":
        values = _explore_values(spec, x, m, params, replicas, seed, budget, False)
    else:
        sim = ball_sim_region(spec, x, m, budget)
        probs = sim.edge_probs(params)
        values = _run(
            sim, replicas, seed,
            lambda u: _label(sim, u < probs).cluster_sizes(sim).astype(float),
            threads=threads,
        )
    mean, se = summarize(values)
    return MCEstimate(mean, se, replicas, seed, "chi_truncated", spec.spec_hash(), params.values, m)


def pivotal_counts(sim: SimRegion, batch: _Batch, colour_mask: np.ndarray) -> np.ndarray:
    """Per replica, the number of masked edges pivotal for ``root <-> targets`` while it fails.

    On the failure event only closed edges can be pivotal, and a closed edge
    is pivotal exactly when it joins the root's cluster to a cluster that
    touches the targets.
    """
    B = batch.labels.shape[0]
    touches = np.zeros(batch.count, dtype=bool)
    if sim.targets.size:
        touches[batch.labels[:, sim.targets].ravel()] = True
    root = batch.root_labels(sim)[:, None]
    lu = batch.labels[:, sim.edges[:, 0]]
    lv = batch.labels[:, sim.edges[:, 1]]
    closed = ~batch.open & colour_mask[None, :]
    piv = closed & (((lu == root) & touches[lv]) | ((lv == root) & touches[lu]))
    failed = ~batch.reaches_targets(sim)
    return np.where(failed, piv.sum(axis=1), 0).reshape(B)


@dataclass(frozen=True)
class RussoReport:
    colour: int
    h: float
    derivative: float
    derivative_se: float
    pivotal_sum: float
    pivotal_sum_se: float
    replicas: int
    seed: int
    common_random_numbers: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def discrepancy_sigma(self) -> float:
        """``|derivative - pivotal_sum|`` in combined standard-error units."""
        combined = math.hypot(self.derivative_se, self.pivotal_sum_se)
        diff = abs(self.derivative - self.pivotal_sum)
        if combined == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / combined

    def to_dict(self) -> dict:
        return {
            "colour": self.colour,
            "h": self.h,
            "finite_difference": {"mean": self.derivative, "std_error": self.derivative_se},
            "pivotal_sum": {"mean": self.pivotal_sum, "std_error": self.pivotal_sum_se},
            "discrepancy_sigma": self.discrepancy_sigma,
            "replicas": self.replicas,
            "seed": self.seed,
            "common_random_numbers": self.common_random_numbers,
            **self.extras,
        }


def russo_consistency(
    spec: GraphSpec,
    params,
    x=None,
    n: int = 1,
    colour: int = 1,
    h: float = 0.01,
    replicas: int = 10_000,
    seed: int = 0,
    threads: int = 1,
    budget: int = DEFAULT_VERTEX_BUDGET,
) -> RussoReport:
    """Compare ``d/dp_i P(x <-> shell n)`` by central differences and by pivotal edges.

    The finite difference uses common random numbers at ``p_i - h`` and
    ``p_i + h``; the pivotal side averages ``count / (1 - p_i)`` over
    replicas, counting colour-``i`` edges pivotal for the event while it fails.
    """
    params = _params(spec, params)
    p = params.prob(colour)
    if p <= 0.0 or p >= 1.0:
        raise ValueError(f"p_{colour} = {p} must lie strictly inside (0, 1)")
    if not (0.0 < p - h and p + h < 1.0):
        raise ValueError(f"p_{colour} +- h must stay inside (0, 1)")
    x = spec.canonical(_root(spec, x))
    sim = ball_sim_region(spec, x, n, budget)
    base = sim.edge_probs(params)
    up = sim.edge_probs(params.with_colour(colour, p + h))
    down = sim.edge_probs(params.with_colour(colour, p - h))
    mask = sim.colours == colour

    def per_batch(u):
        hi = _label(sim, u < up).reaches_targets(sim)
        lo = _label(sim, u < down).reaches_targets(sim)
        fd = (hi.astype(float) - lo.astype(float)) / (2.0 * h)
        piv = pivotal_counts(sim, _label(sim, u < base), mask) / (1.0 - p)
        return np.stack([fd, piv], axis=1)

    vals = _run(sim, replicas, seed, per_batch, threads=threads, width=2)
    d, d_se = summarize(vals[:, 0])
    s, s_se = summarize(vals[:, 1])
    return RussoReport(colour, h, d, d_se, s, s_se, replicas, seed, True,
                       {"n": n, "params": list(params.values), "spec_hash": spec.spec_hash()})


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    residuals: tuple[float, ...]
    used_radii: tuple[int, ...]
    excluded_radii: tuple[int, ...]
    weighted: bool

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "residuals": list(self.residuals),
            "used_radii": list(self.used_radii),
            "excluded_radii": list(self.excluded_radii),
            "weighted": self.weighted,
        }


def fit_decay_rate(samples: Sequence) -> DecayFit:
    """Weighted least-squares fit of ``log(mean)`` against ``k``.

    ``samples`` holds ``(k, estimate)`` pairs where the estimate is an
    :class:`MCEstimate` or a plain number (treated as exact).  Weights are
    ``(mean / std_error)^2``, the inverse variance of ``log(mean)`` to first
    order; if any used point has zero standard error the fit is unweighted.
    Radii with non-positive mean are dropped and reported.
    """
    ks, ys, ses, excluded = [], [], [], []
    for k, est in samples:
        mean = est.mean if isinstance(est, MCEstimate) else float(est)
        se = est.std_error if isinstance(est, MCEstimate) else 0.0
        if mean <= 0.0:
            excluded.append(int(k))
            continue
        ks.append(float(k))
        ys.append(math.log(mean))
        ses.append(se / mean)
    if len(ks) < 3:
        raise FitError(f"need at least 3 radii with positive mean, got {len(ks)}")
    k_arr = np.array(ks)
    y_arr = np.array(ys)
    rel = np.array(ses)
    weighted = bool(np.all(rel > 0))
    w = 1.0 / rel if weighted else None
    slope, intercept = np.polyfit(k_arr, y_arr, 1, w=w)
    resid = y_arr - (slope * k_arr + intercept)
    return DecayFit(-float(slope), float(intercept), tuple(float(r) for r in resid),
                    tuple(int(k) for k in ks), tuple(excluded), weighted)
