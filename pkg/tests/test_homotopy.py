import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarse_lab.homotopy import (ConePoint, HomotopyFamily, build_cone, check_family_condition,
                                 check_homotopy_map, close_map_family, cone_entourage_check,
                                 cone_metric, constant_family, default_grid, family_to_map,
                                 homotopy_domain, homotopy_from_close, homotopy_tower_verdict,
                                 jump_family, levels_bounded, map_to_family, parse_cone_point,
                                 path_closure, restriction_matches, seam_bound,
                                 triangle_violations, worst_triangle_excess)
from coarse_lab.maps import (MapWitness, closeness_constant, constant_map, grows, identity,
                             uniformity_control)
from coarse_lab.metric import FiniteMetricSpace, MetricError, generate, validate_metric

import oracles

F = Fraction
TWO = FiniteMetricSpace([0, 1], [[0, 1], [1, 0]])


def fn(src, tgt, f):
    return MapWitness.from_function(src, tgt, f)


def formula(t, i, s, j):
    """Cone distance over the unit interval, written out independently."""
    d = abs(t - s)
    return math.sqrt(max(0.0, i * i + j * j - (2 - d * d) * i * j))


def exact_formula(t, i, s, j):
    """Same formula with the radicand in exact rational arithmetic."""
    return math.sqrt(i * i + j * j - (2 - (t - s) ** 2) * i * j)


def interval_points(N):
    return [(k / i, i) for i in range(1, N + 1) for k in range(i + 1)]


def oracle_worst_excess(N):
    pts = interval_points(N)
    D = [[formula(a[0], a[1], b[0], b[1]) for b in pts] for a in pts]
    n = len(pts)
    return max(D[x][z] - D[x][y] - D[y][z] for x in range(n) for y in range(n) for z in range(n))


# cone metric ---------------------------------------------------------------

def test_cone_formula_examples():
    assert cone_metric(TWO, (0, 3), (1, 4)) == pytest.approx(math.sqrt(13))
    assert cone_metric(TWO, (0, 2), (0, 7)) == 5
    assert cone_metric(None, (F(1, 4), 6), (F(3, 4), 6)) == pytest.approx(3)


@settings(max_examples=100, deadline=None)
@given(st.fractions(0, 1), st.fractions(0, 1), st.integers(1, 50), st.integers(1, 50))
def test_cone_identities(x, y, i, j):
    assert cone_metric(None, (x, i), (x, j)) == pytest.approx(abs(i - j), abs=1e-12)
    assert cone_metric(None, (x, i), (y, i)) == pytest.approx(i * abs(float(x - y)), rel=1e-12, abs=1e-12)
    assert cone_metric(None, (x, i), (y, j)) == cone_metric(None, (y, j), (x, i))
    assert cone_metric(None, (x, i), (y, j)) == pytest.approx(exact_formula(x, i, y, j),
                                                             rel=1e-12, abs=1e-12)


def test_level_zero_rejected():
    with pytest.raises(ValueError):
        cone_metric(None, (0, 0), (0, 1))


def test_cone_point_labels():
    p = ConePoint(F(1, 3), 6)
    assert p.format() == "1/3@6"
    assert parse_cone_point("1/3@6") == p


def test_two_point_base_cone():
    cone = build_cone(TWO, 3)
    assert len(cone.space) == 6
    assert cone.space.d(ConePoint(0, 3), ConePoint(1, 3)) == 3
    assert cone.violations == []


def test_interval_cone_levels():
    cone = build_cone(None, 2)
    assert cone.t_values(1) == [0, 1]
    assert cone.t_values(2) == [0, F(1, 2), 1]
    assert cone.basepoint == ConePoint(0, 1)
    assert cone.violations == []


def test_fixed_resolution_grid():
    cone = build_cone(None, 3, resolution=4, validate=False)
    assert cone.common_t_values() == [F(k, 4) for k in range(5)]
    with pytest.raises(ValueError):
        build_cone(None, 3, resolution=[F(3, 2)])


def test_interval_cone_fails_triangle_from_level_three():
    # the formula is the Euclidean cone over an arc of angle at most 60 degrees;
    # on the sampled interval, base points a chord apart at level 1 beat the detour
    assert validate_metric(build_cone(None, 2).space) == []
    cone = build_cone(None, 3)
    tri = triangle_violations(cone)
    assert tri, "expected a triangle violation at N=3"
    excess, witness = worst_triangle_excess(cone)
    assert excess == pytest.approx(oracle_worst_excess(3), abs=1e-12)
    assert excess > 0.06
    x, y, z = witness
    assert (cone.space.d(x, z) - cone.space.d(x, y) - cone.space.d(y, z)) == pytest.approx(excess)
    with pytest.raises(MetricError):
        build_cone(None, 3, strict=True)


@pytest.mark.parametrize("N", [4, 8, 16])
def test_worst_excess_matches_brute_force(N):
    excess, _ = worst_triangle_excess(build_cone(None, N))
    assert excess == pytest.approx(oracle_worst_excess(N), abs=1e-9)


def test_excess_grows_linearly_with_levels():
    ex = [worst_triangle_excess(build_cone(None, N))[0] for N in (8, 16, 32)]
    assert grows(ex)
    assert ex[2] / ex[1] == pytest.approx(2, rel=0.05)


def test_path_closure_is_a_metric_below_formula():
    cone = build_cone(None, 6)
    closed = path_closure(cone)
    assert validate_metric(closed) == []
    assert np.all(closed.dist <= cone.space.dist + 1e-12)


# entourage check -----------------------------------------------------------

def test_entourage_diagonal():
    fit = cone_entourage_check([((F(1, 3), i), (F(1, 3), i)) for i in range(1, 40)])
    assert fit.passed and fit.c == 0 and fit.level_gap == 0


def test_entourage_one_step_per_level():
    fit = cone_entourage_check([((0, i), (F(1, i), i)) for i in range(1, 40)])
    assert fit.passed and fit.c == pytest.approx(1)


def test_entourage_far_ends_fail():
    fit = cone_entourage_check([((0, i), (1, i)) for i in range(1, 40)])
    assert not fit.passed and fit.c == 39
    assert not cone_entourage_check([((0, i), (1, i)) for i in range(1, 40)], budget=(0, 1)).passed


def test_entourage_empty():
    with pytest.raises(ValueError):
        cone_entourage_check([])


def test_levels_bounded():
    assert levels_bounded([1, 2, 3, 4], [3, 1, 2, 3])
    assert not levels_bounded([1, 2, 3, 4], [1, 2, 3, 4])
    assert levels_bounded([5], [100])
    # the maximum is reached mid-range and never beaten
    assert levels_bounded(range(1, 13), [0] * 7 + [1] * 5)
    assert levels_bounded(range(1, 13), list(range(1, 9)) + [0] * 4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=2, max_size=30), st.integers(1, 5))
def test_levels_bounded_rejects_linear_growth(prefix, slope):
    n = len(prefix)
    grow = [max(prefix) + slope * (k + 1) for k in range(n)]
    assert not levels_bounded(range(1, 2 * n + 1), prefix + grow)
    assert levels_bounded(range(1, 2 * n + 1), prefix + [max(prefix)] * n)


# homotopy maps -------------------------------------------------------------

N = 12
Z = generate("zplus", N)


@pytest.fixture(scope="module")
def domain():
    return homotopy_domain(Z, 0, R=2)


def test_domain_shape(domain):
    assert domain.cone.N == N + 4
    assert domain.R == 2
    base = domain.cone.basepoint
    assert all(abs(x - cone_metric(None, base, q)) <= 2 + 1e-9 for x, q in domain.pairs)


def test_from_close_endpoints(domain):
    f = identity(Z)
    g = fn(Z, Z, lambda x: min(x + 3, N))
    h = homotopy_from_close(f, g, domain)
    assert restriction_matches(h, domain, 0, f)
    assert restriction_matches(h, domain, 1, g)
    assert restriction_matches(h, domain, F(1, 2), g)
    for k, (x, q) in enumerate(domain.pairs):
        want = f(x) if ConePoint(*q).x == 0 else g(x)
        assert h.target.points[h.images[k]] == want


def test_from_close_constant_in_t(domain):
    f = fn(Z, Z, lambda x: x // 2)
    h = homotopy_from_close(f, f, domain)
    rep = check_homotopy_map(h, domain, range(6))
    assert all(b <= a for a, b in zip(uniformity_control(f, range(6)).bounds, rep.uniformity.bounds))
    assert rep.uniformity.bounds == uniformity_control(f, range(6)).bounds


def test_from_close_seam_uniformity(domain):
    f = identity(Z)
    g = fn(Z, Z, lambda x: min(x + 3, N))
    h = homotopy_from_close(f, g, domain)
    table = uniformity_control(h, range(6))
    S = oracles.table(domain.space)
    T = oracles.table(Z)
    for k, b in table.rows():
        assert b == oracles.uniformity(S, T, list(h.images), k)
        assert b <= k + closeness_constant(f, g)


def test_collapsing_map_flags_properness():
    verdicts = []
    for n in (8, 16, 32):
        X = generate("zplus", n)
        dom = homotopy_domain(X, 0, R=2)
        c = constant_map(X, X, 0)
        h = homotopy_from_close(c, c, dom)
        verdicts.append(check_homotopy_map(h, dom, [0, 1, 2], center=0).properness.bounds[0])
    assert grows(verdicts)


def test_tower_verdict_on_identity_homotopy():
    reps = []
    for n in (8, 16, 24):
        X = generate("zplus", n)
        dom = homotopy_domain(X, 0, R=2)
        h = homotopy_from_close(identity(X), identity(X), dom)
        reps.append(check_homotopy_map(h, dom, range(4), center=0))
    assert homotopy_tower_verdict(reps)


# families ------------------------------------------------------------------

def test_grid_must_contain_endpoints():
    f = identity(Z)
    with pytest.raises(ValueError):
        HomotopyFamily((F(1, 2), F(1)), (f, f))
    with pytest.raises(ValueError):
        HomotopyFamily((F(0), F(1, 2)), (f, f))
    with pytest.raises(ValueError):
        HomotopyFamily((F(0), F(1)), (f,))


def test_default_grid_contains_midpoint():
    g = default_grid()
    assert g[0] == 0 and g[-1] == 1 and F(1, 2) in g and len(g) == 17


def test_nearest_breaks_ties_low():
    fam = constant_family(identity(Z), grid=(0, F(1, 2), 1))
    assert fam.nearest(F(1, 4)) == 0 and fam.nearest(F(3, 4)) == F(1, 2)


@pytest.fixture(scope="module")
def grid_domain():
    return homotopy_domain(Z, 0, R=2, resolution=16)


def test_constant_family_round_trip(grid_domain):
    fam = constant_family(fn(Z, Z, lambda x: x // 3))
    h = family_to_map(fam, grid_domain)
    back = map_to_family(h, grid_domain)
    assert back.grid == fam.grid
    assert all(np.array_equal(a.images, b.images) for a, b in zip(fam.maps, back.maps))
    assert len(set(h.images[grid_domain.left_idx == 5])) == 1


def stretch_rule(Y, top):
    return lambda t: fn(Z, Y, lambda x: min(x + math.floor(t * x), top))


def test_stretch_family_round_trips(grid_domain):
    Y = generate("zplus", 2 * N)
    fam = HomotopyFamily.from_rule(stretch_rule(Y, 2 * N))
    h = family_to_map(fam, grid_domain)
    back = map_to_family(h, grid_domain)
    assert all(np.array_equal(a.images, b.images) for a, b in zip(fam.maps, back.maps))
    h2 = family_to_map(back, grid_domain)
    assert closeness_constant(h, h2) <= seam_bound(h, grid_domain, back)


def test_map_to_family_on_coarse_cone_is_close(domain):
    f = identity(Z)
    g = fn(Z, Z, lambda x: min(x + 3, N))
    h = homotopy_from_close(f, g, domain)
    fam = map_to_family(h, domain)
    assert fam.grid == (0, 1)
    h2 = family_to_map(fam, domain)
    assert closeness_constant(h, h2) <= seam_bound(h, domain, fam)


def test_selector_outside_product(grid_domain):
    h = family_to_map(constant_family(identity(Z)), grid_domain)
    with pytest.raises(ValueError, match="not in the product"):
        map_to_family(h, grid_domain, selector=lambda x: 1 if x > 6 else max(x, 1))


def test_family_condition_constant():
    rep = check_family_condition(constant_family(identity(Z)), [list(range(N + 1))])
    assert rep.passed and rep.bound == 0


def test_family_condition_stretch():
    Y = generate("zplus", 2 * N)
    fam = HomotopyFamily.from_rule(stretch_rule(Y, 2 * N))
    rep = check_family_condition(fam, [list(range(N + 1))])
    assert rep.passed
    assert rep.bound <= fam.c + 1
    # arithmetic bound for t_i = t -+ c/(2i) along rho(i) = i
    worst = max(abs(math.floor((t + s * F(1, 2 * i)) * i) - math.floor(t * i))
                for t in default_grid() for i in range(1, N + 1) for s in (-1, 1)
                if 0 <= t + s * F(1, 2 * i) <= 1)
    assert rep.bound == worst


def test_family_condition_jump_fails_at_half():
    Y = generate("zplus", 2 * N)
    f = fn(Z, Y, lambda x: x)
    g = fn(Z, Y, lambda x: 2 * x)
    rep = check_family_condition(jump_family(f, g), [list(range(N + 1))])
    assert not rep.passed and rep.failing == (F(1, 2),)
    assert rep.per_t[F(1, 2)] == N
    assert check_family_condition(jump_family(f, g), [list(range(N + 1))],
                                  ts=[0, F(1, 4), F(3, 4), 1]).passed


def test_family_condition_grid_too_coarse():
    f = identity(Z)
    fam = HomotopyFamily((F(0), F(1)), (f, f), c=1.0)
    # an on-grid t always approaches itself, so only off-grid t is rejected
    assert check_family_condition(fam, [list(range(N + 1))], ts=[0]).passed
    with pytest.raises(ValueError, match="neither on the grid"):
        check_family_condition(fam, [list(range(N + 1))], ts=[F(1, 3)])


def test_close_map_family_matches_map_form(domain):
    f = identity(Z)
    g = fn(Z, Z, lambda x: min(x + 3, N))
    h = homotopy_from_close(f, g, domain)
    h2 = family_to_map(close_map_family(f, g), domain)
    assert np.array_equal(h.images, h2.images)
    assert check_family_condition(close_map_family(f, g), [list(range(N + 1))]).passed
