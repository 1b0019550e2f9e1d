"""Exact connection probabilities and the boundary functional psi.

For a finite region ``S``, ``P(x <-S-> y)`` is the probability that ``x`` and
``y`` are joined by open edges with both endpoints in ``S``.  It is computed
exactly by summing over edge configurations.

The region graph is first split into biconnected blocks.  A path from ``x``
to ``y`` has to cross the blocks on the block-cut-tree path between them, in
order, entering and leaving each one through fixed cut vertices; blocks share
no edges, so ``P(x <-S-> y)`` is the product of the per-block connection
probabilities.  Only blocks are enumerated, so the enumeration limit applies
to the largest block rather than to the whole region (a ball in a tree has
only single-edge blocks).

Each block is enumerated exhaustively with numpy: configurations are batched
as bit rows, and connectivity inside every batch is found by min-label
propagation over the block's edges.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .graph_model import Region

DEFAULT_ENUMERATION_LIMIT = 26
NAIVE_LIMIT = 20
_CHUNK_BITS = 16


class EnumerationLimitError(RuntimeError):
    """A block has more internal edges than the enumeration limit allows."""

    def __init__(self, edges: int, limit: int):
        super().__init__(
            f"exact enumeration needs 2^{edges} configurations of a {edges}-edge block; "
            f"the enumeration limit is {limit} edges"
        )
        self.edges = edges
        self.limit = limit


class DomainError(ValueError):
    """A vertex argument lies outside the region."""


@dataclass(frozen=True)
class ParamVector:
    """Colour-wise retention probabilities ``(p_1, ..., p_{N-1}, q)``.

    Colours are 1-based; the last entry is ``q``.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("at least one parameter is required")
        for v in vals:
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"parameter {v} outside [0, 1]")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_parts(cls, p_fixed: Sequence[float], q: float) -> "ParamVector":
        return cls(tuple(p_fixed) + (q,))

    def __len__(self):
        return len(self.values)

    def prob(self, colour: int) -> float:
        if not 1 <= colour <= len(self.values):
            raise ValueError(f"no parameter for colour {colour}")
        return self.values[colour - 1]

    @property
    def q(self) -> float:
        return self.values[-1]

    @property
    def p(self) -> tuple[float, ...]:
        return self.values[:-1]

    def with_colour(self, colour: int, value: float) -> "ParamVector":
        vals = list(self.values)
        vals[colour - 1] = value
        return ParamVector(tuple(vals))

    def check_colours(self, colour_count: int) -> None:
        if len(self.values) != colour_count:
            raise ValueError(
                f"expected {colour_count} parameters (one per colour), got {len(self.values)}"
            )


@dataclass(frozen=True)
class PsiTerm:
    edge: tuple
    colour: int
    connection_probability: float


@dataclass(frozen=True)
class PsiResult:
    value: float
    per_edge_terms: tuple[PsiTerm, ...]
    region_edge_count: int


@dataclass(frozen=True)
class BlockTally:
    """Per-vertex connection probabilities from ``source`` within one block."""

    probabilities: np.ndarray
    total_weight: float


def _as_params(params) -> ParamVector:
    return params if isinstance(params, ParamVector) else ParamVector(tuple(params))


def _propagate_labels(bits: np.ndarray, edges: np.ndarray, n: int) -> np.ndarray:
    labels = np.broadcast_to(np.arange(n, dtype=np.int32), (bits.shape[0], n)).copy()
    changed = True
    while changed:
        changed = False
        for e in range(edges.shape[0]):
            u, v = edges[e]
            lu = labels[:, u]
            lv = labels[:, v]
            upd = bits[:, e] & (lu != lv)
            if upd.any():
                low = np.minimum(lu, lv)[upd]
                labels[upd, u] = low
                labels[upd, v] = low
                changed = True
    return labels


def _tally_chunk(start, stop, edges, probs, source, n):
    idx = np.arange(start, stop, dtype=np.uint64)
    m = edges.shape[0]
    bits = ((idx[:, None] >> np.arange(m, dtype=np.uint64)) & np.uint64(1)).astype(bool)
    weights = np.prod(np.where(bits, probs, 1.0 - probs), axis=1)
    labels = _propagate_labels(bits, edges, n)
    joined = labels == labels[:, source : source + 1]
    return weights @ joined, float(weights.sum())


def block_connection_probabilities(
    n: int,
    edges: Sequence[tuple[int, int]],
    probs: Sequence[float],
    source: int,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    threads: int = 1,
) -> BlockTally:
    """Enumerate all ``2^m`` configurations of a small graph on ``0..n-1``.

    Returns ``P(source <-> v)`` for every vertex ``v`` and the summed weight
    of all configurations (1 up to rounding).
    """
    m = len(edges)
    if m > limit:
        raise EnumerationLimitError(m, limit)
    edges_arr = np.asarray(edges, dtype=np.intp).reshape(m, 2)
    probs_arr = np.asarray(probs, dtype=float)
    total = 1 << m
    chunk = 1 << _CHUNK_BITS
    bounds = [(s, min(total, s + chunk)) for s in range(0, total, chunk)]
    work = lambda b: _tally_chunk(b[0], b[1], edges_arr, probs_arr, source, n)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    acc = np.zeros(n)
    weight = 0.0
    # summed in chunk order so the result does not depend on thread count
    for p, w in parts:
        acc += p
        weight += w
    return BlockTally(np.clip(acc, 0.0, 1.0), weight)


def connection_probability_within(
    region: Region,
    params,
    x,
    targets: Iterable,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    threads: int = 1,
) -> dict:
    """Exact ``P(x <-S-> y)`` for every ``y`` in ``targets``.

    Raises
    ------
    DomainError
        If ``x`` or a target is not a vertex of ``region``.
    EnumerationLimitError
        If a block on a path from ``x`` to a target has more than ``limit`` edges.
    """
    params = _as_params(params)
    targets = list(dict.fromkeys(targets))
    if x not in region.vertices:
        raise DomainError(f"{x!r} is not in the region")
    for y in targets:
        if y not in region.vertices:
            raise DomainError(f"target {y!r} is not in the region")

    g = nx.Graph()
    g.add_node(x)
    for u, v, c in region.internal_edges:
        g.add_edge(u, v, colour=c)
    comp = nx.node_connected_component(g, x)
    result = {y: 0.0 for y in targets}
    if x in result:
        result[x] = 1.0
    reachable = [y for y in targets if y in comp and y != x]
    if not reachable:
        return result

    sub = g.subgraph(comp)
    blocks = [list(b) for b in nx.biconnected_component_edges(sub)]
    vertex_blocks: dict = {}
    for i, block in enumerate(blocks):
        for u, v in block:
            for w in (u, v):
                vertex_blocks.setdefault(w, set()).add(i)

    # Breadth-first walk over the block-cut tree rooted at x: every block gets
    # a unique entry vertex, every other vertex a unique (block, entry) parent.
    entry = {}
    parent = {}
    order = []
    frontier = [x]
    seen_blocks = set()
    while frontier:
        nxt = []
        for a in frontier:
            for i in sorted(vertex_blocks.get(a, ())):
                if i in seen_blocks:
                    continue
                seen_blocks.add(i)
                entry[i] = a
                order.append(i)
                for u, v in blocks[i]:
                    for w in (u, v):
                        if w != a and w not in parent:
                            parent[w] = i
                            nxt.append(w)
        frontier = nxt

    needed = set()
    for y in reachable:
        w = y
        while w != x:
            i = parent[w]
            if i in needed:
                break
            needed.add(i)
            w = entry[i]

    prob = {x: 1.0}
    for i in order:
        if i not in needed:
            continue
        a = entry[i]
        local = sorted({w for e in blocks[i] for w in e})
        index = {w: j for j, w in enumerate(local)}
        ledges = [(index[u], index[v]) for u, v in blocks[i]]
        lprobs = [params.prob(sub.edges[u, v]["colour"]) for u, v in blocks[i]]
        tally = block_connection_probabilities(
            len(local), ledges, lprobs, index[a], limit=limit, threads=threads
        )
        for w in local:
            if w != a and parent.get(w) == i:
                prob[w] = prob[a] * float(tally.probabilities[index[w]])
    for y in reachable:
        result[y] = prob[y]
    return result


def psi_value(
    region: Region,
    params,
    x,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    threads: int = 1,
) -> PsiResult:
    """Boundary functional ``sum_i p_i sum_{{y,z} in dS, colour i} P(x <-S-> y)``."""
    params = _as_params(params)
    inner = [y for y, _, _ in region.boundary_edges]
    conn = connection_probability_within(region, params, x, inner, limit=limit, threads=threads)
    terms = tuple(
        PsiTerm((y, z), c, conn[y]) for y, z, c in region.boundary_edges
    )
    value = math.fsum(params.prob(t.colour) * t.connection_probability for t in terms)
    return PsiResult(value, terms, region.edge_count)


class _DSU:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def naive_oracle(region: Region, params, x, y, limit: int = NAIVE_LIMIT) -> float:
    """Brute-force ``P(x <-S-> y)``: rebuild connectivity for each configuration."""
    params = _as_params(params)
    if x not in region.vertices or y not in region.vertices:
        raise DomainError("x and y must lie in the region")
    m = region.edge_count
    if m > limit:
        raise EnumerationLimitError(m, limit)
    verts = sorted(region.vertices, key=repr)
    index = {v: i for i, v in enumerate(verts)}
    edges = [(index[u], index[v], params.prob(c)) for u, v, c in region.internal_edges]
    total = 0.0
    for config in itertools.product((0, 1), repeat=m):
        dsu = _DSU(len(verts))
        weight = 1.0
        for (u, v, p), bit in zip(edges, config):
            if bit:
                weight *= p
                dsu.union(u, v)
            else:
                weight *= 1.0 - p
        if dsu.find(index[x]) == dsu.find(index[y]):
            total += weight
    return total
