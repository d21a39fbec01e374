import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarse_lab.metric import (FiniteMetricSpace, MetricError, WeightedGraph, ball, covering_number,
                               entourage_pairs, format_label, generate, greedy_net, make_tower,
                               model_space, parse_tower, shortest_path_metric, validate_metric)

import oracles


def line(n):
    return generate("zplus", n)


# validate_metric -----------------------------------------------------------

def test_zplus_truncation_is_valid():
    assert validate_metric(line(4)) == []


def test_triangle_violation_witness():
    X = FiniteMetricSpace([0, 1, 2], [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    bad = validate_metric(X)
    assert [v.kind for v in bad] == ["triangle"]
    assert bad[0].points == (0, 2, 1)
    assert bad[0].excess == pytest.approx(1.0)


def test_symmetry_violation_witness():
    X = FiniteMetricSpace([0, 1], [[0, 1], [2, 0]])
    kinds = {v.kind: v.points for v in validate_metric(X)}
    assert kinds["symmetry"] == (0, 1)


def test_nonfinite_entries_reported():
    X = FiniteMetricSpace([0, 1], [[0, math.inf], [math.inf, 0]])
    assert validate_metric(X)[0].kind == "finiteness"


def test_dimension_mismatch_raises():
    with pytest.raises(MetricError):
        FiniteMetricSpace([0, 1, 2], np.zeros((2, 2)))


def test_duplicate_labels_rejected():
    with pytest.raises(MetricError):
        FiniteMetricSpace([0, 0], np.zeros((2, 2)))


@pytest.mark.parametrize("family,size", [
    ("zplus", 20), ("zplus2_l1", 5), ("grid2_l1", 4), ("binary_tree", 5),
    ("cayley_ball[free:2]", 3), ("cayley_ball[abelian:1,0;0,1]", 4),
    ("cayley_ball[abelian:1,0;0,1;1,1]", 3)])
def test_generators_produce_metrics(family, size):
    X = generate(family, size)
    assert validate_metric(X) == []
    assert oracles.triangle_ok(oracles.table(X))


def test_generator_sizes():
    assert len(generate("zplus", 4)) == 5
    assert len(generate("grid2_l1", 2)) == 25
    assert len(generate("binary_tree", 3)) == 15
    assert len(generate("cayley_ball[free:2]", 2)) == 17       # 1 + 4 + 12
    assert len(generate("cayley_ball[abelian:1,0;0,1;1,1]", 2)) == 19  # hexagonal ball


def test_cayley_word_metric_matches_graph_distances():
    X = generate("cayley_ball[abelian:1,0;0,1]", 3)
    pts = list(X.points)
    index = {p: i for i, p in enumerate(pts)}
    edges = []
    for p in pts:
        for g in ((1, 0), (0, 1)):
            q = (p[0] + g[0], p[1] + g[1])
            if q in index:
                edges.append((index[p], index[q], 1))
    D = oracles.floyd_warshall(len(pts), edges)
    # within the ball of radius 3, l1 paths stay inside the ball
    assert np.allclose(X.dist, D)


def test_unknown_family():
    with pytest.raises(MetricError):
        model_space("sphere")


def test_label_formatting():
    assert format_label((2, 3)) == "2,3"
    assert generate("grid2_l1", 1).index("0,1") == generate("grid2_l1", 1).index((0, 1))


# shortest paths ------------------------------------------------------------

def test_path_graph_distance():
    X = shortest_path_metric(WeightedGraph((0, 1, 2), ((0, 1, 1), (1, 2, 1))))
    assert X.d(0, 2) == 2


def test_triangle_shortcut():
    X = shortest_path_metric(WeightedGraph((0, 1, 2), ((0, 1, 1), (1, 2, 1), (0, 2, 3))))
    assert X.d(0, 2) == 2


def test_disconnected_graph_names_pair():
    with pytest.raises(MetricError, match="'a'.*'b'"):
        shortest_path_metric(WeightedGraph(("a", "b"), ()))


def test_graph_rejects_loops_and_bad_weights():
    with pytest.raises(MetricError):
        WeightedGraph((0,), ((0, 0, 1),))
    with pytest.raises(MetricError):
        WeightedGraph((0, 1), ((0, 1, 0),))


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 9))
    edges = [(i, draw(st.integers(0, i - 1)), draw(st.integers(1, 6))) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                                    st.integers(1, 6)), max_size=10))
    edges += [(u, v, w) for u, v, w in extra if u != v]
    return n, edges


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_shortest_path_metric_matches_floyd_warshall(g):
    n, edges = g
    X = shortest_path_metric(WeightedGraph(tuple(range(n)), tuple(edges)))
    assert np.allclose(X.dist, oracles.floyd_warshall(n, edges))
    assert validate_metric(X) == []


# balls and entourages ------------------------------------------------------

def test_ball_examples():
    assert ball(line(10), 0, 2) == [0, 1, 2]
    assert ball(line(10), 7, 0) == [7]
    assert len(ball(generate("grid2_l1", 5), (0, 0), 2)) == 13
    assert 13 == sum(1 for i in range(-5, 6) for j in range(-5, 6) if abs(i) + abs(j) <= 2)


def test_ball_unknown_point():
    with pytest.raises(KeyError):
        ball(line(3), 9, 1)


def test_entourage_examples():
    X = line(3)
    assert sorted(entourage_pairs(X, 0)) == [(i, i) for i in range(4)]
    assert len(entourage_pairs(X, 1)) == 10
    assert len(entourage_pairs(X, X.diameter())) == 16


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(0, 6), st.floats(0, 6))
def test_balls_and_entourages_monotone(n, r1, r2):
    r1, r2 = sorted((r1, r2))
    X = generate("grid2_l1", 2) if n % 2 else line(n)
    p = X.points[0]
    assert set(ball(X, p, r1)) <= set(ball(X, p, r2))
    small = set(entourage_pairs(X, r1))
    assert small <= set(entourage_pairs(X, r2))
    assert all((y, x) in small for x, y in small)


# nets and covers -----------------------------------------------------------

def test_greedy_net_examples():
    net = greedy_net(line(10), 2)
    assert net.points == (0, 2, 4, 6, 8, 10)
    assert net.constant <= 2
    assert greedy_net(line(5), 0).points == tuple(range(6))
    assert greedy_net(line(5), 0).constant == 0
    one = FiniteMetricSpace(["p"], [[0]])
    assert greedy_net(one, 3).points == ("p",) and greedy_net(one, 3).constant == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.floats(0, 8))
def test_greedy_net_is_discrete_and_dense(n, eps):
    X = line(n) if n % 3 else generate("grid2_l1", max(1, n // 10))
    net = greedy_net(X, eps)
    idx = X.indices(net.points)
    D = X.block(idx, idx)
    off = D[~np.eye(len(idx), dtype=bool)]
    assert np.all(off >= eps - 1e-9)
    assert X.block(np.arange(len(X)), idx).min(axis=1).max() <= eps + 1e-9


def test_covering_examples():
    X = line(10)
    assert covering_number(X, X.points, 10).count == 1
    cov = covering_number(X, X.points, 1)
    assert cov.count == 4
    # greedy by maximum coverage, first centre on ties
    assert cov.centers == (1, 4, 7, 9)
    assert oracles.min_cover_size(oracles.table(X), range(11), 1) == 4
    assert covering_number(X, [5], 1).count == 1
    assert covering_number(X, [], 1).count == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 15), min_size=1, max_size=10, unique=True), st.integers(0, 4))
def test_covering_centres_cover(subset, r0):
    X = line(15)
    cov = covering_number(X, subset, r0)
    assert set(cov.centers) <= set(subset)
    for b in subset:
        assert any(abs(b - c) <= r0 for c in cov.centers)
    assert cov.count >= oracles.min_cover_size(oracles.table(X), subset, r0)


# towers --------------------------------------------------------------------

def test_make_tower_zplus():
    t = make_tower("zplus", [4, 8])
    assert [len(L) for L in t.levels] == [5, 9]
    assert list(t.embeddings[0]) == [0, 1, 2, 3, 4]
    assert t.check() == []


def test_make_tower_grid():
    t = make_tower("grid2_l1", [2, 4])
    assert [len(L) for L in t.levels] == [25, 81]
    assert t.check() == []


def test_make_tower_rejects_decreasing():
    with pytest.raises(MetricError):
        make_tower("zplus", [8, 4])


@pytest.mark.parametrize("family", ["binary_tree", "cayley_ball[free:2]", "zplus2_l1"])
def test_tower_embeddings_are_isometric(family):
    t = make_tower(family, [1, 2, 3])
    for lo, hi, e in zip(t.levels, t.levels[1:], t.embeddings):
        assert np.array_equal(hi.block(e, e), lo.dist)


def test_parse_tower():
    assert parse_tower("zplus:64,128") == ("zplus", [64, 128])
    assert parse_tower("cayley_ball[abelian:1,0;0,1]:2,3") == ("cayley_ball[abelian:1,0;0,1]", [2, 3])
    with pytest.raises(MetricError):
        parse_tower("zplus:")
