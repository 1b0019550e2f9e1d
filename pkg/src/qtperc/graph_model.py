"""Finite descriptions of quasi-transitive edge-coloured graphs.

Two families are supported:

* ``periodic_lattice``: a unit cell with ``k`` vertex types repeated over
  ``Z^d``.  A rule ``(a, b, offset, colour)`` joins ``(cell, a)`` to
  ``(cell + offset, b)`` for every cell.
* ``coloured_tree``: the regular tree whose vertices carry ``m_c`` edges of
  colour ``c`` for every rule ``(c, m_c)``.  Vertices are reduced words over
  the generators (the Cayley graph of a free product of order-two groups).

Balls, shells and edge boundaries are materialized on demand as
:class:`Region` values.
"""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Hashable, Iterable, NamedTuple

PERIODIC_LATTICE = "periodic_lattice"
COLOURED_TREE = "coloured_tree"

DEFAULT_VERTEX_BUDGET = 1_000_000


class GraphSpecError(ValueError):
    """Raised when a graph-spec document is malformed or describes an invalid graph."""


class BudgetExceededError(RuntimeError):
    """Raised when a materialized region would exceed the vertex budget."""

    def __init__(self, budget: int, radius: int):
        super().__init__(
            f"ball of radius {radius} exceeds the vertex budget of {budget} vertices"
        )
        self.budget = budget
        self.radius = radius


class LatticeVertex(NamedTuple):
    cell: tuple[int, ...]
    type: int


class TreeVertex(NamedTuple):
    word: tuple[int, ...]


Vertex = Hashable


class EdgeRule(NamedTuple):
    a: int
    b: int
    offset: tuple[int, ...]
    colour: int


class TreeRule(NamedTuple):
    colour: int
    multiplicity: int


def _negate(offset):
    return tuple(-o for o in offset)


def _spans_integer_lattice(vectors, d):
    """Return True if the integer vectors generate all of ``Z^d``.

    Row-reduces over the integers to echelon form; the generated subgroup is
    ``Z^d`` iff there are ``d`` pivots, all of absolute value one.
    """
    rows = [list(v) for v in vectors if any(v)]
    r = 0
    for col in range(d):
        while True:
            nz = [i for i in range(r, len(rows)) if rows[i][col] != 0]
            if not nz:
                return False
            piv = min(nz, key=lambda i: abs(rows[i][col]))
            rows[r], rows[piv] = rows[piv], rows[r]
            done = True
            for i in range(r + 1, len(rows)):
                if rows[i][col]:
                    f = rows[i][col] // rows[r][col]
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
                    if rows[i][col]:
                        done = False
            if done:
                break
        if abs(rows[r][col]) != 1:
            return False
        r += 1
    return True


@dataclass(frozen=True)
class GraphSpec:
    """A quasi-transitive edge-coloured graph described by a finite rule set.

    Use :func:`parse_graph_spec` to build one from a JSON document; the
    constructor validates the rules and raises :class:`GraphSpecError`.
    """

    kind: str
    dimension: int
    vertex_types: tuple[str, ...]
    edge_rules: tuple
    colour_count: int
    _adjacency: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.colour_count < 1:
            raise GraphSpecError("colour_count must be at least 1")
        if self.kind == PERIODIC_LATTICE:
            adjacency = self._build_lattice()
        elif self.kind == COLOURED_TREE:
            adjacency = self._build_tree()
        else:
            raise GraphSpecError(f"unknown graph kind {self.kind!r}")
        object.__setattr__(self, "_adjacency", adjacency)

    def _check_colour(self, colour):
        if not (isinstance(colour, int) and 1 <= colour <= self.colour_count):
            raise GraphSpecError(
                f"colour {colour!r} outside 1..{self.colour_count}"
            )

    def _check_all_colours_used(self, colours):
        missing = set(range(1, self.colour_count + 1)) - set(colours)
        if missing:
            raise GraphSpecError(f"colours {sorted(missing)} appear in no edge rule")

    def _build_lattice(self):
        d = self.dimension
        k = len(self.vertex_types)
        if d < 1:
            raise GraphSpecError("lattice dimension must be at least 1")
        if k < 1:
            raise GraphSpecError("a lattice needs at least one vertex type")
        if not self.edge_rules:
            raise GraphSpecError("no edge rules given")
        # Directed half-edges per source type: offset, target type -> colour.
        half: list[dict] = [dict() for _ in range(k)]
        for rule in self.edge_rules:
            a, b, offset, colour = rule
            if not (0 <= a < k and 0 <= b < k):
                raise GraphSpecError(f"rule {tuple(rule)} references an unknown vertex type")
            if len(offset) != d:
                raise GraphSpecError(f"rule {tuple(rule)} has an offset of length != {d}")
            self._check_colour(colour)
            if a == b and not any(offset):
                raise GraphSpecError(f"rule {tuple(rule)} is a self-loop")
            for src, dst, off in ((a, b, offset), (b, a, _negate(offset))):
                prev = half[src].get((off, dst))
                if prev is not None and prev != colour:
                    raise GraphSpecError(
                        f"parallel edges of colours {prev} and {colour} between the same vertices"
                    )
                half[src][(off, dst)] = colour
        self._check_all_colours_used(r.colour for r in self.edge_rules)

        # Connectivity: every type reachable in the quotient graph, and the
        # cycle offsets must generate the full translation group Z^d.
        position = {0: (0,) * d}
        queue = deque([0])
        while queue:
            t = queue.popleft()
            for (off, u) in half[t]:
                if u not in position:
                    position[u] = tuple(x + o for x, o in zip(position[t], off))
                    queue.append(u)
        if len(position) != k:
            raise GraphSpecError("the lattice is disconnected: some vertex types are unreachable")
        cycles = [
            tuple(pa + o - pb for pa, o, pb in zip(position[t], off, position[u]))
            for t in range(k)
            for (off, u) in half[t]
        ]
        if not _spans_integer_lattice(cycles, d):
            raise GraphSpecError("the lattice is disconnected: edge offsets do not generate Z^d")

        return tuple(
            tuple(sorted((off, u, c) for (off, u), c in half[t].items()))
            for t in range(k)
        )

    def _build_tree(self):
        if len(self.vertex_types) != 1:
            raise GraphSpecError("a coloured tree has exactly one vertex type")
        generators = []
        for rule in self.edge_rules:
            colour, multiplicity = rule
            self._check_colour(colour)
            if not (isinstance(multiplicity, int) and multiplicity >= 1):
                raise GraphSpecError(f"tree rule {tuple(rule)} needs a positive multiplicity")
            generators.extend([colour] * multiplicity)
        self._check_all_colours_used(r.colour for r in self.edge_rules)
        if len(generators) < 2:
            raise GraphSpecError("a tree of degree < 2 is finite")
        return tuple(generators)

    @property
    def type_count(self) -> int:
        return len(self.vertex_types)

    def neighbors(self, v) -> list[tuple[Any, int]]:
        """Return ``(neighbour, colour)`` pairs of vertex ``v``."""
        if self.kind == PERIODIC_LATTICE:
            cell, t = v
            return [
                (LatticeVertex(tuple(x + o for x, o in zip(cell, off)), u), c)
                for off, u, c in self._adjacency[t]
            ]
        word = v.word
        out = []
        for g, c in enumerate(self._adjacency):
            if word and word[-1] == g:
                out.append((TreeVertex(word[:-1]), c))
            else:
                out.append((TreeVertex(word + (g,)), c))
        return out

    def degree(self, v) -> int:
        if self.kind == PERIODIC_LATTICE:
            return len(self._adjacency[v[1]])
        return len(self._adjacency)

    def colour_degrees(self, v) -> dict[int, int]:
        """Number of edges of each colour at ``v``."""
        out = {c: 0 for c in range(1, self.colour_count + 1)}
        for _, c in self.neighbors(v):
            out[c] += 1
        return out

    def is_vertex(self, v) -> bool:
        if self.kind == PERIODIC_LATTICE:
            return (
                isinstance(v, tuple)
                and len(v) == 2
                and isinstance(v[0], tuple)
                and len(v[0]) == self.dimension
                and 0 <= v[1] < self.type_count
            )
        if not isinstance(v, TreeVertex):
            return False
        w = v.word
        return all(0 <= g < len(self._adjacency) for g in w) and all(
            a != b for a, b in zip(w, w[1:])
        )

    def canonical(self, v):
        """Return ``v`` as a :class:`LatticeVertex` / :class:`TreeVertex`.

        Raises ``ValueError`` if ``v`` is not a vertex of this graph.
        """
        if self.kind == PERIODIC_LATTICE:
            try:
                cell, t = v
                v = LatticeVertex(tuple(int(c) for c in cell), int(t))
            except (TypeError, ValueError):
                raise ValueError(f"{v!r} is not a lattice vertex") from None
        elif not isinstance(v, TreeVertex):
            v = TreeVertex(tuple(v))
        if not self.is_vertex(v):
            raise ValueError(f"{v!r} is not a vertex of the graph")
        return v

    def type_of(self, v) -> int:
        return v[1] if self.kind == PERIODIC_LATTICE else 0

    def to_dict(self) -> dict:
        if self.kind == PERIODIC_LATTICE:
            rules = [
                {"a": r.a, "b": r.b, "offset": list(r.offset), "colour": r.colour}
                for r in self.edge_rules
            ]
        else:
            rules = [{"colour": r.colour, "multiplicity": r.multiplicity} for r in self.edge_rules]
        doc = {
            "kind": self.kind,
            "vertex_types": list(self.vertex_types),
            "edge_rules": rules,
            "colour_count": self.colour_count,
        }
        if self.kind == PERIODIC_LATTICE:
            doc["dimension"] = self.dimension
        return doc

    def spec_hash(self) -> str:
        """Short SHA-256 digest of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_graph_spec(doc: dict) -> GraphSpec:
    """Build a :class:`GraphSpec` from an already-loaded JSON document.

    Colour indices in the document are 1-based.
    """
    if not isinstance(doc, dict):
        raise GraphSpecError("graph spec must be a JSON object")
    try:
        kind = doc["kind"]
        colour_count = int(doc["colour_count"])
        raw_rules = doc["edge_rules"]
        if kind == PERIODIC_LATTICE:
            dimension = int(doc["dimension"])
            types = tuple(str(t) for t in doc["vertex_types"])
            rules = tuple(
                EdgeRule(int(r["a"]), int(r["b"]), tuple(int(o) for o in r["offset"]), int(r["colour"]))
                for r in raw_rules
            )
        elif kind == COLOURED_TREE:
            dimension = 0
            types = tuple(str(t) for t in doc.get("vertex_types", ["v"]))
            rules = tuple(TreeRule(int(r["colour"]), int(r["multiplicity"])) for r in raw_rules)
        else:
            raise GraphSpecError(f"unknown graph kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GraphSpecError):
            raise
        raise GraphSpecError(f"malformed graph spec: {exc!r}") from exc
    return GraphSpec(kind, dimension, types, rules, colour_count)


def vertex_to_json(v) -> Any:
    if isinstance(v, LatticeVertex):
        return {"cell": list(v.cell), "type": v.type}
    if isinstance(v, TreeVertex):
        return {"word": list(v.word)}
    return v


def vertex_from_json(obj) -> Any:
    if isinstance(obj, dict) and "cell" in obj:
        return LatticeVertex(tuple(obj["cell"]), int(obj["type"]))
    if isinstance(obj, dict) and "word" in obj:
        return TreeVertex(tuple(obj["word"]))
    return obj


def _edge_key(u, v, colour):
    return (u, v, colour) if u <= v else (v, u, colour)


@dataclass(frozen=True)
class Region:
    """A finite vertex set ``S`` with its internal edges and edge boundary.

    ``internal_edges`` holds ``(u, v, colour)`` with ``u < v``;
    ``boundary_edges`` holds ``(y, z, colour)`` with ``y`` inside and ``z``
    outside.  Both are sorted tuples.
    """

    vertices: frozenset
    internal_edges: tuple
    boundary_edges: tuple = ()

    def __post_init__(self):
        seen = set()
        for u, v, _ in self.internal_edges:
            if u == v:
                raise ValueError(f"self-loop at {u!r}")
            if u not in self.vertices or v not in self.vertices:
                raise ValueError(f"internal edge ({u!r}, {v!r}) leaves the region")
            key = frozenset((u, v))
            if key in seen:
                raise ValueError(f"duplicate edge ({u!r}, {v!r})")
            seen.add(key)
        for y, z, _ in self.boundary_edges:
            if y not in self.vertices or z in self.vertices:
                raise ValueError(f"boundary edge ({y!r}, {z!r}) is not a boundary edge")
            key = frozenset((y, z))
            if key in seen:
                raise ValueError(f"duplicate edge ({y!r}, {z!r})")
            seen.add(key)

    def __len__(self):
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.internal_edges)


def region_from_vertices(spec: GraphSpec, vertices: Iterable) -> Region:
    """Materialize the region induced by a finite vertex set of ``spec``."""
    S = frozenset(vertices)
    internal = set()
    boundary = set()
    for y in S:
        for z, c in spec.neighbors(y):
            if z in S:
                internal.add(_edge_key(y, z, c))
            else:
                boundary.add((y, z, c))
    return Region(S, tuple(sorted(internal)), tuple(sorted(boundary)))


def _distances(spec, root, k, budget):
    dist = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        dv = dist[v]
        if dv == k:
            continue
        for w, _ in spec.neighbors(v):
            if w not in dist:
                dist[w] = dv + 1
                if len(dist) > budget:
                    raise BudgetExceededError(budget, k)
                queue.append(w)
    return dist


def ball_distances(spec: GraphSpec, root, k: int, budget: int = DEFAULT_VERTEX_BUDGET) -> dict:
    """Graph distance from ``root`` for every vertex of the ball of radius ``k``."""
    if k < 0:
        raise ValueError("radius must be non-negative")
    return _cached_distances(spec, spec.canonical(root), k, budget)


@lru_cache(maxsize=128)
def _cached_distances(spec, root, k, budget):
    return _distances(spec, root, k, budget)


@lru_cache(maxsize=128)
def _cached_ball(spec, root, k, budget):
    return region_from_vertices(spec, _cached_distances(spec, root, k, budget))


def generate_ball(spec: GraphSpec, root, k: int, budget: int = DEFAULT_VERTEX_BUDGET) -> Region:
    """Return the ball of radius ``k`` around ``root`` as a :class:`Region`.

    Raises
    ------
    BudgetExceededError
        If the ball holds more than ``budget`` vertices.
    """
    ball_distances(spec, root, k, budget)
    return _cached_ball(spec, spec.canonical(root), k, budget)


def shell(spec: GraphSpec, root, k: int, budget: int = DEFAULT_VERTEX_BUDGET) -> frozenset:
    """Vertices at graph distance exactly ``k`` from ``root``."""
    if k < 1:
        raise ValueError("shell radius must be at least 1")
    dist = ball_distances(spec, root, k, budget)
    return frozenset(v for v, dv in dist.items() if dv == k)


def vertex_orbits(spec: GraphSpec) -> list:
    """One representative per declared vertex type."""
    if spec.kind == PERIODIC_LATTICE:
        origin = (0,) * spec.dimension
        return [LatticeVertex(origin, t) for t in range(spec.type_count)]
    return [TreeVertex(())]


def tree_distance(u: TreeVertex, v: TreeVertex) -> int:
    """Graph distance between two vertices of a coloured tree."""
    common = 0
    for a, b in zip(u.word, v.word):
        if a != b:
            break
        common += 1
    return len(u.word) + len(v.word) - 2 * common


def ball_size(spec: GraphSpec, root, k: int, budget: int = DEFAULT_VERTEX_BUDGET) -> int:
    """Number of vertices in the ball of radius ``k``; closed form for trees."""
    if spec.kind == COLOURED_TREE:
        d = spec.degree(root)
        return 1 + sum(d * (d - 1) ** (j - 1) for j in range(1, k + 1))
    return len(ball_distances(spec, root, k, budget))


def set_radius(spec: GraphSpec, root, vertices: Iterable) -> int:
    """Smallest ``r`` with ``vertices`` inside the ball of radius ``r`` around ``root``."""
    S = set(vertices)
    if root not in S:
        raise ValueError("root must belong to the set")
    dist = {root: 0}
    queue = deque([root])
    found = 1
    r = 0
    while found < len(S):
        v = queue.popleft()
        for w, _ in spec.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
                if w in S:
                    found += 1
                    r = dist[w]
    return r
