import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarse_lab.maps import (MapWitness, closeness_constant, compose, identity,
                             injectivity_control, surjectivity_constant, uniformity_control)
from coarse_lab.metric import FiniteMetricSpace, generate, validate_metric
from coarse_lab.product import (Pair, basepoint_change_tolerance, build_product, canonical_embed,
                                cartesian_product, commutation_constant, embed_surjectivity,
                                enumerate_pairs, floor_distance_map, inclusion_constant, mediate,
                                mediator_uniqueness)

import oracles

N = 12
Z = generate("zplus", N)


def fn(src, tgt, f):
    return MapWitness.from_function(src, tgt, f)


# floor map -----------------------------------------------------------------

def test_floor_map_on_line_is_identity():
    r = floor_distance_map(Z, 0)
    assert list(r.images) == list(range(N + 1))
    assert len(r.target) == N + 1


def test_floor_map_on_grid():
    G = generate("grid2_l1", 3)
    assert floor_distance_map(G, (0, 0))((2, 3)) == 5


@pytest.mark.parametrize("scale", [math.sqrt(2), math.pi / 2, 0.7])
def test_floor_map_uniformity_on_rescaled_space(scale):
    G = generate("grid2_l1", 3)
    Y = FiniteMetricSpace(G.points, G.dist * scale)
    r = floor_distance_map(Y, (1, -2))
    S, T = oracles.table(Y), oracles.table(r.target)
    for k in np.linspace(0, Y.diameter(), 17):
        assert oracles.uniformity(S, T, list(r.images), k) <= k + 2 + 1e-9


# construction --------------------------------------------------------------

def test_diagonal_product():
    prod = build_product(Z, 0, Z, 0, R=0)
    assert prod.pairs == [Pair(i, i) for i in range(N + 1)]


def test_membership_at_r1():
    prod = build_product(generate("zplus", 10), 0, generate("zplus", 10), 0, R=1)
    assert prod.contains(3, 4) and not prod.contains(3, 10)


@pytest.mark.parametrize("R", [0, 1, 2.5])
@pytest.mark.parametrize("p", [(0, 0), (1, -2)])
def test_grid_times_line_matches_enumeration(R, p):
    G = generate("grid2_l1", 3)
    prod = build_product(G, p, Z, 2, R=R)
    assert prod.pairs == enumerate_pairs(G, p, Z, 2, R)
    brute = [Pair(x, y) for x in G.points for y in Z.points
             if abs(G.d(x, p) - abs(y - 2)) <= R]
    assert set(prod.pairs) == set(brute)


def test_product_metric_is_valid_and_projections_lipschitz():
    G = generate("grid2_l1", 2)
    for comb in ("max", "sum"):
        prod = build_product(G, (0, 0), Z, 0, R=1, combiner=comb)
        assert validate_metric(prod.space) == []
        if comb == "max":
            for pr in (prod.p_X, prod.p_Y):
                assert uniformity_control(pr, range(6)).bounds == tuple(float(k) for k in range(6))


def test_product_metric_matches_brute_force():
    G = generate("grid2_l1", 2)
    prod = build_product(G, (0, 0), Z, 0, R=1)
    pts = prod.pairs
    for i in range(0, len(pts), 7):
        for j in range(0, len(pts), 5):
            a, b = pts[i], pts[j]
            want = max(G.d(a.left, b.left), abs(a.right - b.right))
            assert prod.space.d(a, b) == want


def test_lazy_close_pairs_match_dense_scan():
    prod = build_product(generate("grid2_l1", 2), (0, 0), Z, 0, R=2)
    D = np.array(prod.space.dist)
    for r in (0, 1, 2.5):
        got = set()
        for I, J, V in prod.space.close_pairs(r):
            got |= set(zip(I.tolist(), J.tolist()))
            assert np.allclose(D[I, J], V)
        want = set(zip(*np.nonzero(D <= r + 1e-9)))
        assert got == {(int(a), int(b)) for a, b in want}


def test_basepoint_pair_always_present():
    # (p, q) has radius difference 0, so no R >= 0 gives an empty product
    prod = build_product(generate("zplus", 20), 20, FiniteMetricSpace([0, 1], [[0, 1], [1, 0]]), 0, R=0)
    assert prod.pairs == [Pair(19, 1), Pair(20, 0)]
    with pytest.raises(ValueError):
        build_product(Z, 0, Z, 0, R=-1)


def test_default_tolerance_and_warning():
    gappy = FiniteMetricSpace([0, 3], [[0, 3], [3, 0]])
    with pytest.warns(UserWarning):
        prod = build_product(Z, 0, gappy, 0, c=1)
    assert prod.R == 4
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_product(Z, 0, Z, 0, c=1)


def test_cartesian_product_size():
    assert len(cartesian_product(generate("zplus", 3), generate("zplus", 4))) == 20


# well-definedness ----------------------------------------------------------

def test_inclusion_equal_tolerance():
    a = build_product(Z, 0, Z, 0, R=2)
    b = build_product(Z, 0, Z, 0, R=2)
    rep = inclusion_constant(a, b)
    assert rep.constant == 0 and rep.containment_defect == 0


@pytest.mark.parametrize("n", [16, 32, 64])
def test_inclusion_r3_into_r4(n):
    X = generate("zplus", n)
    small = build_product(X, 0, X, 0, R=3)
    big = build_product(X, 0, X, 0, R=4)
    rep = inclusion_constant(small, big, c=1)
    assert rep.containment_defect == 0
    assert rep.constant <= 4
    # brute force nearest small pair for every big pair
    brute = max(min(max(abs(u.left - v.left), abs(u.right - v.right)) for v in small.pairs)
                for u in big.pairs)
    assert rep.constant == brute == 1
    # 4 <= 2*3 - 1 - 2 = 3 is false, so the flag is off although the constant is small
    assert rep.hypothesis is False


def test_inclusion_hypothesis_flag_true():
    small = build_product(Z, 0, Z, 0, R=4)
    big = build_product(Z, 0, Z, 0, R=5)
    assert inclusion_constant(small, big, c=1).hypothesis is True


def test_inclusion_mismatched_factors():
    with pytest.raises(ValueError):
        inclusion_constant(build_product(Z, 0, Z, 0, R=1),
                           build_product(generate("zplus", 5), 0, Z, 0, R=1))


@pytest.mark.parametrize("p2,q2", [(3, 0), (2, 5), (0, 7)])
def test_basepoint_change_inclusion_is_onto_nested(p2, q2):
    a = build_product(Z, 0, Z, 0, R=1)
    R2 = basepoint_change_tolerance(a, p2, q2)
    assert R2 == p2 + q2 + 1
    b = build_product(Z, p2, Z, q2, R=R2)
    assert set(a.pairs) <= set(b.pairs)
    assert inclusion_constant(a, b).containment_defect == 0


@pytest.mark.parametrize("R", [0, 1, 2.5])
def test_diagram_commutes_up_to_closeness(R):
    G = generate("grid2_l1", 3)
    prod = build_product(G, (0, 0), Z, 0, R=R)
    assert commutation_constant(prod) <= R + 1
    rx = floor_distance_map(G, (0, 0))
    brute = max(abs(rx(pr.left) - pr.right) for pr in prod.pairs)
    assert commutation_constant(prod) == brute


# pullback ------------------------------------------------------------------

def test_mediate_identity():
    prod = build_product(Z, 0, Z, 0, R=0)
    med = mediate(identity(Z), identity(Z), prod, 0)
    assert [prod.space.points[i] for i in med.map.images] == [Pair(z, z) for z in Z.points]
    assert med.K == 0


def test_mediate_shifted_g():
    prod = build_product(Z, 0, Z, 0, R=1)
    f = identity(Z)
    g = fn(Z, Z, lambda z: min(z + 3, N))
    med = mediate(f, g, prod, 1)
    assert np.array_equal(compose(med.map, prod.p_X).images, f.images)
    assert closeness_constant(compose(med.map, prod.p_Y), g) == med.K
    brute = max(min(abs(y - g(z)) for y in Z.points if abs(z - y) <= 1) for z in Z.points)
    assert med.K == brute <= 4


def test_mediate_incompatible():
    prod = build_product(Z, 0, Z, 0, R=1)
    with pytest.raises(ValueError, match="not compatible"):
        mediate(identity(Z), fn(Z, Z, lambda z: 0), prod, 1, slack=2)


def test_mediate_c_exceeds_tolerance():
    prod = build_product(Z, 0, Z, 0, R=1)
    with pytest.raises(ValueError):
        mediate(identity(Z), identity(Z), prod, 2)


def test_mediate_empty_candidates_suggests_larger_c():
    Y = FiniteMetricSpace([0, 4], [[0, 4], [4, 0]])
    prod = build_product(Z, 0, Y, 0, R=4)
    g = MapWitness(Z, Y, np.zeros(len(Z), dtype=int))
    with pytest.raises(ValueError, match="larger c"):
        mediate(identity(Z), g, prod, 1)


def test_uniqueness_examples():
    prod = build_product(Z, 0, Z, 0, R=1)
    f = g = identity(Z)
    med = mediate(f, g, prod, 1)
    assert mediator_uniqueness(med.map, f, g, prod, med).constant == 0
    h = fn(Z, prod.space, lambda z: Pair(z, min(z + 1, N)))
    u = mediator_uniqueness(h, f, g, prod, med)
    assert u.constant == 1 and u.passed


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_uniqueness_bound_holds_for_random_h(data):
    prod = build_product(Z, 0, Z, 0, R=2)
    f = identity(Z)
    g = fn(Z, Z, lambda z: min(z + 1, N))
    med = mediate(f, g, prod, 1)
    img = data.draw(st.lists(st.integers(0, len(prod) - 1), min_size=N + 1, max_size=N + 1))
    h = MapWitness(Z, prod.space, np.array(img))
    u = mediator_uniqueness(h, f, g, prod, med)
    brute = max(max(abs(a.left - b.left), abs(a.right - b.right))
                for a, b in zip((prod.space.points[i] for i in img),
                                (prod.space.points[i] for i in med.map.images)))
    assert u.constant == brute
    assert u.passed


# canonical equivalence -----------------------------------------------------

def test_canonical_embed_on_line():
    L = generate("zplus", N + 4)
    prod = build_product(Z, 0, L, 0, R=2)
    e = canonical_embed(Z, 0, prod)
    assert [prod.space.points[i] for i in e.images] == [Pair(z, z) for z in Z.points]
    assert np.array_equal(compose(e, prod.p_X).images, np.arange(N + 1))


@pytest.mark.parametrize("n", [16, 32, 64])
def test_canonical_embed_is_an_equivalence(n):
    X = generate("zplus", n)
    prod = build_product(X, 0, generate("zplus", n + 4), 0, R=2)
    e = canonical_embed(X, 0, prod)
    assert embed_surjectivity(e) <= 2
    assert surjectivity_constant(e) == 2
    assert injectivity_control(e, range(6)) == injectivity_control(identity(X), range(6))


def test_canonical_embed_requires_matching_product():
    prod = build_product(Z, 0, Z, 0, R=2)
    with pytest.raises(ValueError):
        canonical_embed(Z, 3, prod)
