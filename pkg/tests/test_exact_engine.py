import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SPEC_NAMES, load
from qtperc.exact_engine import (
    DomainError,
    EnumerationLimitError,
    ParamVector,
    block_connection_probabilities,
    connection_probability_within,
    naive_oracle,
    psi_value,
)
from qtperc.graph_model import LatticeVertex, Region, generate_ball, region_from_vertices, vertex_orbits


def random_region(rng, max_edges=14, colours=3):
    n = rng.randint(2, 9)
    pairs = list(itertools.combinations(range(n), 2))
    rng.shuffle(pairs)
    chosen = pairs[: rng.randint(1, min(max_edges, len(pairs)))]
    internal = tuple(sorted((u, v, rng.randint(1, colours)) for u, v in chosen))
    boundary = tuple((rng.randrange(n), 100 + j, rng.randint(1, colours)) for j in range(rng.randint(0, 5)))
    return Region(frozenset(range(n)), internal, boundary)


def random_params(rng, colours=3):
    return ParamVector(tuple(rng.choice([0.0, 1.0, rng.random()]) for _ in range(colours)))


def brute_force(region, params, x, y):
    """Enumerate with networkx-free set merging, independently of the package oracle."""
    edges = region.internal_edges
    total = 0.0
    for states in itertools.product((0, 1), repeat=len(edges)):
        w = 1.0
        comp = {v: {v} for v in region.vertices}
        for (u, v, c), s in zip(edges, states):
            p = params.prob(c)
            w *= p if s else 1.0 - p
            if s and comp[u] is not comp[v]:
                merged = comp[u] | comp[v]
                for t in merged:
                    comp[t] = merged
        if y in comp[x]:
            total += w
    return total


def test_oracle_equivalence_random_regions():
    rng = random.Random(20240601)
    for _ in range(200):
        region = random_region(rng)
        params = random_params(rng)
        x = rng.randrange(len(region.vertices))
        targets = sorted(region.vertices)
        got = connection_probability_within(region, params, x, targets)
        for y in targets:
            assert abs(got[y] - naive_oracle(region, params, x, y)) <= 1e-12


def test_oracle_matches_independent_brute_force():
    rng = random.Random(7)
    for _ in range(40):
        region = random_region(rng, max_edges=9)
        params = random_params(rng)
        got = connection_probability_within(region, params, 0, region.vertices)
        for y in region.vertices:
            assert abs(got[y] - brute_force(region, params, 0, y)) <= 1e-12


def test_single_edge():
    region = Region(frozenset({"x", "y"}), (("x", "y", 1),))
    params = ParamVector((0.3,))
    assert connection_probability_within(region, params, "x", ["y"])["y"] == pytest.approx(0.3, abs=1e-15)
    assert naive_oracle(region, params, "x", "y") == pytest.approx(0.3, abs=1e-15)


def test_triangle():
    region = Region(frozenset("xyz"), (("x", "y", 1), ("x", "z", 1), ("y", "z", 1)))
    got = connection_probability_within(region, ParamVector((0.5,)), "x", ["y"])["y"]
    assert got == pytest.approx(0.625, abs=1e-14)


def test_all_open_and_disconnected():
    region = Region(frozenset(range(4)), ((0, 1, 1), (1, 2, 1)))
    got = connection_probability_within(region, ParamVector((1.0,)), 0, [2, 3])
    assert got == {2: 1.0, 3: 0.0}
    assert naive_oracle(region, ParamVector((1.0,)), 0, 3) == 0.0
    assert connection_probability_within(region, ParamVector((1.0,)), 0, [0]) == {0: 1.0}


def test_block_normalization():
    rng = random.Random(3)
    for _ in range(20):
        n = rng.randint(3, 7)
        edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < 0.6]
        probs = [rng.random() for _ in edges]
        tally = block_connection_probabilities(n, edges, probs, 0)
        assert abs(tally.total_weight - 1.0) <= 1e-12
        assert np.all((tally.probabilities >= 0) & (tally.probabilities <= 1 + 1e-15))


def test_block_threads_bit_identical():
    n = 7
    edges = list(itertools.combinations(range(n), 2))[:20]
    probs = [0.1 + 0.04 * i for i in range(len(edges))]
    one = block_connection_probabilities(n, edges, probs, 0, threads=1)
    four = block_connection_probabilities(n, edges, probs, 0, threads=4)
    assert np.array_equal(one.probabilities, four.probabilities)


@pytest.mark.parametrize("r", range(0, 9))
@pytest.mark.parametrize("p", [0.1 * i for i in range(1, 10)])
def test_z1_ball_closed_form(z1, r, p):
    ball = generate_ball(z1, vertex_orbits(z1)[0], r)
    assert abs(psi_value(ball, ParamVector((p,)), vertex_orbits(z1)[0]).value - 2 * p ** (r + 1)) <= 1e-12


def test_z2_ball_one(z2):
    x = vertex_orbits(z2)[0]
    for p in (0.1, 0.25, 0.4):
        assert psi_value(generate_ball(z2, x, 1), ParamVector((p,)), x).value == pytest.approx(12 * p * p, abs=1e-14)


def test_anisotropic_singleton(aniso):
    x = vertex_orbits(aniso)[0]
    res = psi_value(generate_ball(aniso, x, 0), ParamVector((0.3, 0.6)), x)
    assert res.value == pytest.approx(2 * 0.3 + 2 * 0.6, abs=1e-15)


def test_tree_ball_closed_form(tree3):
    x = vertex_orbits(tree3)[0]
    for r in range(5):
        got = psi_value(generate_ball(tree3, x, r), ParamVector((0.3,)), x).value
        assert got == pytest.approx(3 * 2 ** r * 0.3 ** (r + 1), rel=1e-12)


@pytest.mark.parametrize("name", SPEC_NAMES)
def test_singleton_is_degree_weighted_sum(name):
    spec = load(name)
    rng = random.Random(name)
    params = ParamVector(tuple(rng.random() for _ in range(spec.colour_count)))
    for x in vertex_orbits(spec):
        expected = math.fsum(params.prob(c) * k for c, k in spec.colour_degrees(x).items())
        assert abs(psi_value(generate_ball(spec, x, 0), params, x).value - expected) <= 1e-12


def test_psi_equals_sum_of_terms(z2):
    x = vertex_orbits(z2)[0]
    res = psi_value(generate_ball(z2, x, 2), ParamVector((0.3,)), x)
    assert res.value == pytest.approx(sum(0.3 * t.connection_probability for t in res.per_edge_terms), abs=1e-12)
    assert len(res.per_edge_terms) == 20
    assert res.region_edge_count == 16


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.integers(0, 2),
    st.floats(0, 1),
    st.integers(0, 10_000),
)
def test_psi_monotone_in_each_parameter(values, colour, bump, seed):
    region = random_region(random.Random(seed), max_edges=10)
    lo = ParamVector(tuple(values))
    raised = list(values)
    raised[colour] = values[colour] + (1 - values[colour]) * bump
    hi = ParamVector(tuple(raised))
    assert psi_value(region, hi, 0).value >= psi_value(region, lo, 0).value - 1e-12
    assert psi_value(region, lo, 0).value >= 0.0


def test_monotone_grid_triangular():
    spec = load("triangular-3colour")
    x = vertex_orbits(spec)[0]
    ball = generate_ball(spec, x, 1)
    grid = [0.0, 0.3, 0.6, 0.9]
    for point in itertools.product(grid, repeat=3):
        base = psi_value(ball, ParamVector(point), x).value
        for i in range(3):
            if point[i] < 0.9:
                up = list(point)
                up[i] += 0.3
                assert psi_value(ball, ParamVector(tuple(up)), x).value >= base - 1e-12


def test_enumeration_limit_error(z2):
    x = vertex_orbits(z2)[0]
    with pytest.raises(EnumerationLimitError) as info:
        psi_value(generate_ball(z2, x, 3), ParamVector((0.3,)), x)
    assert "32" in str(info.value) and "26" in str(info.value)
    with pytest.raises(EnumerationLimitError):
        psi_value(generate_ball(z2, x, 2), ParamVector((0.3,)), x, limit=8)


def test_per_block_limit_allows_long_trees(tree3):
    # the ball of radius 4 has 45 edges but every biconnected block is a single edge
    x = vertex_orbits(tree3)[0]
    assert psi_value(generate_ball(tree3, x, 4), ParamVector((0.3,)), x).value > 0


def test_naive_oracle_limit():
    edges = tuple((i, i + 1, 1) for i in range(21))
    region = Region(frozenset(range(22)), edges)
    with pytest.raises(EnumerationLimitError):
        naive_oracle(region, ParamVector((0.5,)), 0, 21)


def test_domain_errors(z2):
    x = vertex_orbits(z2)[0]
    ball = generate_ball(z2, x, 1)
    outside = LatticeVertex((5, 5), 0)
    with pytest.raises(DomainError):
        connection_probability_within(ball, ParamVector((0.3,)), outside, [x])
    with pytest.raises(DomainError):
        connection_probability_within(ball, ParamVector((0.3,)), x, [outside])
    with pytest.raises(DomainError):
        psi_value(ball, ParamVector((0.3,)), outside)


@pytest.mark.parametrize("values", [(-0.1,), (1.5,), (float("nan"),)])
def test_param_vector_range(values):
    with pytest.raises(ValueError):
        ParamVector(values)


def test_param_vector_parts():
    pv = ParamVector.from_parts((0.2, 0.4), 0.7)
    assert pv.values == (0.2, 0.4, 0.7)
    assert pv.q == 0.7 and pv.p == (0.2, 0.4)
    assert pv.prob(2) == 0.4
    assert pv.with_colour(3, 0.1).values == (0.2, 0.4, 0.1)
    with pytest.raises(ValueError):
        pv.check_colours(2)


def test_non_ball_region(z2):
    x = vertex_orbits(z2)[0]
    cells = [(0, 0), (1, 0), (1, 1), (0, 1), (2, 0)]
    region = region_from_vertices(z2, [LatticeVertex(c, 0) for c in cells])
    got = connection_probability_within(region, ParamVector((0.5,)), x, region.vertices)
    for y in region.vertices:
        assert abs(got[y] - naive_oracle(region, ParamVector((0.5,)), x, y)) <= 1e-12
