"""The invariant suite: one block of report rows per acceptance check.

Each check returns rows ``(check, scale, constant, bound, verdict)``.  The
towers default to ``zplus:64,128,256`` for the line and ``grid2_l1:4,6,8``
for the plane; ``inject`` swaps in a deliberately broken fixture so that the
targeted rows can be seen to fail.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import flasque as fl
from . import homotopy as hm
from .geodesic import (check_geodesification, connectivity_threshold, geodesify, replay_connectivity,
                       upper_control)
from .maps import (ControlTable, MapWitness, closeness_constant, compose, identity, injectivity_control,
                   properness_profile, quasi_inverse, surjectivity_constant, tables_equal,
                   transport_upper_control, uniformity_control)
from .metric import EPS, FiniteMetricSpace, generate, make_tower, validate_metric
from .product import (Pair, build_product, canonical_embed, enumerate_pairs, floor_distance_map,
                      inclusion_constant, mediate, mediator_uniqueness, basepoint_change_tolerance)
from .rays import check_ray_criterion, extract_ray, neighbourhood_indices

Row = tuple  # (check, scale, constant, bound, verdict)

INJECTIONS = ("floor_map", "flasque_shift", "mediator")


@dataclass
class SuiteConfig:
    line: tuple = ("zplus", (64, 128, 256))
    plane: tuple = ("grid2_l1", (4, 6, 8))
    only: frozenset | None = None
    inject: frozenset = field(default_factory=frozenset)
    seed: int = 0


# 1 --------------------------------------------------------------------------

def metric_axioms(cfg: SuiteConfig) -> list[Row]:
    rows = []
    spaces = [generate(cfg.line[0], s) for s in cfg.line[1]]
    spaces += [generate(cfg.plane[0], s) for s in cfg.plane[1]]
    spaces += [generate("zplus2_l1", 8), generate("binary_tree", 6),
               generate("cayley_ball[free:2]", 3), generate("cayley_ball[abelian:1,0;0,1;1,1]", 4)]
    for X in spaces:
        bad = validate_metric(X)
        rows.append((f"metric_axioms:{X.name}", "", len(bad), 0, not bad))
    for N in (1, 2, 3, 4, 8, 16, 32):
        cone = hm.build_cone(None, N, validate=False)
        excess, _ = hm.worst_triangle_excess(cone)
        rows.append(("metric_axioms:cone_interval", N, excess, 1e-9, excess <= 1e-9))
    return rows


# 2 --------------------------------------------------------------------------

def cone_identities(cfg: SuiteConfig, N: int = 32) -> list[Row]:
    cone = hm.build_cone(None, N, validate=False)
    pts = cone.space.points
    D = cone.space.dist
    t = np.array([float(p.x) for p in pts])
    lv = np.array([p.level for p in pts], dtype=float)
    same_x = t[:, None] == t[None, :]
    same_l = lv[:, None] == lv[None, :]
    err_x = float(np.abs(D - np.abs(lv[:, None] - lv[None, :]))[same_x].max())
    err_l = float(np.abs(D - lv[:, None] * np.abs(t[:, None] - t[None, :]))[same_l].max())
    return [("cone_identity:same_base_point", N, err_x, 1e-9, err_x <= 1e-9),
            ("cone_identity:same_level", N, err_l, 1e-9, err_l <= 1e-9)]


# 3 --------------------------------------------------------------------------

def _floor_map(X, p, broken: bool) -> MapWitness:
    w = floor_distance_map(X, p)
    if not broken:
        return w
    target = generate("zplus", int(2 * math.ceil(X.diameter())) + 2)
    img = np.floor(2 * X.distances_from(p) + EPS).astype(int)
    return MapWitness(X, target, img, "broken_r_p")


def floor_map_bound(cfg: SuiteConfig) -> list[Row]:
    rows = []
    grid = generate(cfg.plane[0], cfg.plane[1][-1])
    cases = [(grid, grid.model.base),
             (generate(cfg.line[0], cfg.line[1][-1]).scaled(math.sqrt(2)), 0),
             (grid.scaled(math.sqrt(2)), grid.model.base)]
    for X, p in cases:
        w = _floor_map(X, p, "floor_map" in cfg.inject)
        scales = np.unique(np.round(X.dist[X.dist <= 12 + EPS], 9))
        phi = uniformity_control(w, scales)
        excess = max(b - s for s, b in phi.rows())
        rows.append((f"floor_map:{X.name}", float(scales[-1]), excess, 2, excess <= 2 + EPS))
    return rows


# 4 --------------------------------------------------------------------------

def geodesification(cfg: SuiteConfig) -> list[Row]:
    rows = []
    for family, sizes in (cfg.line, cfg.plane):
        for c in (1, 2):
            consts = []
            for s in sizes[-2:]:
                X = generate(family, s)
                real = geodesify(X, c)
                chk = check_geodesification(real)
                rows.append((f"geodesify:{X.name}:c={c}", c,
                             min(chk.uniformity_slack, chk.injectivity_slack), 0, chk.passed))
                q = quasi_inverse(real.phi_map())
                consts.append((q.fg_constant, q.gf_constant))
            rows.append((f"geodesify_quasi_inverse:{family}:c={c}", c, consts[-1][1],
                         consts[-2][1], consts[-1] == consts[-2]))
    return rows


# 5 --------------------------------------------------------------------------

def _perturbed_surjection(hi: FiniteMetricSpace, lo: FiniteMetricSpace, K: int,
                          rng: np.random.Generator) -> MapWitness:
    cross = hi.model.label_dist
    lo_pts = list(lo.points)
    img = []
    for x in hi.points:
        d = cross([x] * len(lo_pts), lo_pts)
        near = np.nonzero(d <= d.min() + K + EPS)[0]
        img.append(int(rng.choice(near)))
    return MapWitness(hi, lo, np.array(img), f"perturbed_K{K}")


def connectivity_replay(cfg: SuiteConfig, trials: int = 20) -> list[Row]:
    rng = np.random.default_rng(cfg.seed)
    worst, worst_path = -math.inf, -math.inf
    for k in range(trials):
        family, sizes = (cfg.line, cfg.plane)[k % 2]
        a = k // 2 % (len(sizes) - 1)
        lo, hi = generate(family, sizes[a]), generate(family, sizes[a + 1])
        f = _perturbed_surjection(hi, lo, int(rng.integers(0, 3)), rng)
        c = connectivity_threshold(hi)
        K = surjectivity_constant(f)
        d = uniformity_control(f, [c])(c)
        e = max(K, d)
        worst = max(worst, connectivity_threshold(lo) - e)
        y, y2 = lo.points[int(rng.integers(len(lo)))], lo.points[int(rng.integers(len(lo)))]
        path, e2 = replay_connectivity(f, c, y, y2)
        steps = lo.pair_dist(lo.indices(path[:-1]), lo.indices(path[1:]))
        worst_path = max(worst_path, float(steps.max()) - e2)
    rows = [("connectivity_invariance", trials, worst, 0, worst <= EPS),
            ("connectivity_replay_path", trials, worst_path, 0, worst_path <= EPS)]
    X = generate(cfg.line[0], 64)
    phi_x = upper_control(X, 1, range(0, 65))
    varphi = ControlTable(range(0, 31), [2 * r for r in range(0, 31)])
    K = 2
    got = transport_upper_control(phi_x, K, varphi, range(0, 27))
    ref = []
    for r in range(0, 27):
        v = next(b for s, b in varphi.rows() if s >= r + 2 * K - EPS)
        ref.append(next(b for s, b in phi_x.rows() if s >= v - EPS) + 2)
    diff = max(abs(a - b) for a, b in zip(got.bounds, ref))
    rows.append(("transport_upper_control", 26, diff, 0, diff <= EPS))
    return rows


# 6 --------------------------------------------------------------------------

def _ray_cases():
    z = generate("zplus", 256)
    g = generate("grid2_l1", 32)
    t = generate("binary_tree", 10)
    diag = [(k, k) for k in range(33)]
    leaves = ["r" + "0" * k for k in range(11)]
    return [(z, list(range(0, 257, 2)), 1, 1), (g, diag, 2, 1), (t, leaves, 1, 1)]


def ray_extraction(cfg: SuiteConfig) -> list[Row]:
    rows = []
    for X, seq, r0, c in _ray_cases():
        ext = extract_ray(X, seq, r0, c)
        diam = X.diameter()
        phi = upper_control(X, c, np.arange(0, math.ceil(diam) + 1))
        crit = check_ray_criterion(ext.ray.points, X, c + r0, phi)
        tail = seq[len(seq) // 2:]
        near = neighbourhood_indices(X, tail, ext.ray.points, r0 + c)
        frac = len(near) / len(tail)
        rows.append((f"ray_criterion:{X.name}", c + r0, ext.depth, "", crit.passed))
        rows.append((f"ray_tail_coverage:{X.name}", r0 + c, frac, 0.5, frac >= 0.5))
    return rows


# 7 --------------------------------------------------------------------------

def asymptotic_product(cfg: SuiteConfig) -> list[Row]:
    rows = []
    z16 = generate("zplus", 16)
    g3 = generate("grid2_l1", 3)
    mismatch = 0
    for (L, p, Rt, q, R) in [(z16, 0, z16, 0, 0), (z16, 0, z16, 0, 1), (z16, 0, z16, 0, 2),
                             (g3, (0, 0), generate("zplus", 8), 0, 1), (z16, 3, z16, 5, 2)]:
        prod = build_product(L, p, Rt, q, R)
        mismatch += len(set(prod.pairs) ^ set(enumerate_pairs(L, p, Rt, q, R)))
    rows.append(("product_pairs_vs_enumeration", "", mismatch, 0, mismatch == 0))
    z32 = generate("zplus", 32)
    prod = build_product(z32, 0, z32, 0, 2)
    ks = [0, 1, 2, 3, 4]
    for name, w in (("p_X", prod.p_X), ("p_Y", prod.p_Y)):
        tab = uniformity_control(w, ks)
        dev = max(abs(b - s) for s, b in tab.rows())
        rows.append((f"projection_uniformity:{name}", 4, dev, 0, dev <= EPS))
    consts = []
    for s in cfg.line[1]:
        X = generate(cfg.line[0], s)
        rep = inclusion_constant(build_product(X, 0, X, 0, 3), build_product(X, 0, X, 0, 4))
        consts.append(rep.constant)
        rows.append((f"inclusion_R3_R4:{X.name}", 4, rep.constant, "", math.isfinite(rep.constant)))
    rows.append(("inclusion_R3_R4:tower_stable", "", consts[-1], consts[-2], consts[-1] == consts[-2]))
    X = generate(cfg.line[0], cfg.line[1][0])
    small = build_product(X, 0, X, 0, 1)
    R2 = basepoint_change_tolerance(small, 3, 2)
    rep = inclusion_constant(small, build_product(X, 3, X, 2, R2))
    rows.append(("basepoint_change_inclusion", R2, rep.containment_defect, 0,
                 rep.containment_defect <= EPS))
    return rows


# 8 --------------------------------------------------------------------------

def _pullback_fixture(family: str, size: int):
    Z = generate(family, size)
    base = Z.model.base
    if family == "zplus":
        X = Y = Z
        f = identity(Z)
        g = MapWitness.from_function(Z, Y, lambda z: min(z + 3, size))
        p = q = 0
    else:
        X = Z
        radius = floor_distance_map(Z, base)
        Y = radius.target
        f = identity(Z)
        g = MapWitness(Z, Y, np.minimum(radius.images + 2, len(Y) - 1), "r+2")
        p, q = base, 0
    return Z, X, Y, f, g, p, q


def pullback(cfg: SuiteConfig, trials: int = 20) -> list[Row]:
    rows = []
    rng = np.random.default_rng(cfg.seed + 1)
    for family, sizes in (cfg.line, cfg.plane):
        Ks = []
        for s in sizes:
            Z, X, Y, f, g, p, q = _pullback_fixture(family, s)
            c = 1
            prod = build_product(X, p, Y, q, 2)
            med = mediate(f, g, prod, c)
            if "mediator" in cfg.inject:
                flipped = np.where(np.arange(len(Z)) % 2 == 0, 0, med.map.images)
                med = type(med)(MapWitness(Z, prod.space, flipped, "broken"), med.K, med.R_comp, med.gbar)
            Ks.append(med.K)
            exact = bool(np.array_equal(compose(med.map, prod.p_X).images, f.images))
            rows.append((f"mediator:{Z.name}", c, med.K, med.R_comp + c + 1,
                         exact and med.K <= med.R_comp + c + 1 + EPS))
        rows.append((f"mediator_K_stable:{family}", "", Ks[-1], Ks[-2], Ks[-1] == Ks[-2]))
    Z, X, Y, f, g, p, q = _pullback_fixture(cfg.line[0], cfg.line[1][0])
    prod = build_product(X, p, Y, q, 2)
    med = mediate(f, g, prod, 1)
    worst = -math.inf
    nbrs: dict[int, list] = {}
    for I, J, _ in prod.space.close_pairs(2.0):
        for a, b in zip(I.tolist(), J.tolist()):
            nbrs.setdefault(a, []).append(b)
    for _ in range(trials):
        img = np.array([rng.choice(nbrs[k]) for k in med.map.images])
        h = MapWitness(Z, prod.space, img, "h")
        u = mediator_uniqueness(h, f, g, prod, med)
        worst = max(worst, u.constant - u.bound)
    rows.append(("mediator_uniqueness", trials, worst, 0, worst <= EPS))
    return rows


# 9 --------------------------------------------------------------------------

def canonical_equivalence(cfg: SuiteConfig, R: int = 2) -> list[Row]:
    rows = []
    for family, sizes in (cfg.line, cfg.plane):
        for s in sizes:
            X = generate(family, s)
            p = X.model.base
            M = int(math.ceil(X.eccentricity(p))) + R
            prod = build_product(X, p, generate("zplus", M), 0, R)
            e = canonical_embed(X, p, prod)
            surj = surjectivity_constant(e)
            scales = [0, 1, 2, 3, 4]
            same = tables_equal(injectivity_control(e, scales), injectivity_control(identity(X), scales))
            rows.append((f"embed_surjectivity:{X.name}", R, surj, R, surj <= R + EPS))
            rows.append((f"embed_injectivity:{X.name}", 4, 0 if same else 1, 0, same))
    return rows


# 10 -------------------------------------------------------------------------

def homotopy_definitions(cfg: SuiteConfig, N: int = 64) -> list[Row]:
    rows = []
    X = generate("zplus", N)
    grid = hm.default_grid()
    prod = hm.homotopy_domain(X, 0, resolution=list(grid))

    def rule(t):
        return MapWitness.from_function(X, X, lambda x: min(x + math.floor(t * x), N))
    fam = hm.HomotopyFamily.from_rule(rule, grid)
    back = hm.map_to_family(hm.family_to_map(fam, prod), prod)
    exact = back.grid == fam.grid and all(np.array_equal(a.images, b.images)
                                          for a, b in zip(fam.maps, back.maps))
    rows.append(("family_map_family", len(grid), 0 if exact else 1, 0, exact))

    h = MapWitness.from_function(prod.space, X, lambda pr: min(pr.left + math.floor(pr.right.x * pr.right.level), N))
    fam2 = hm.map_to_family(h, prod)
    const = closeness_constant(h, hm.family_to_map(fam2, prod))
    bound = hm.seam_bound(h, prod, fam2)
    rows.append(("map_family_map", "", const, bound, const <= bound + EPS))

    Y = generate("zplus", 2 * N)
    f = MapWitness.from_function(X, Y, lambda x: x, "f")
    g = MapWitness.from_function(X, Y, lambda x: 2 * x, "g")
    ray = list(range(N + 1))
    jump = hm.check_family_condition(hm.jump_family(f, g), [ray])
    rows.append(("jump_family_fails", 0.5, jump.bound, "", not jump.passed
                 and Fraction(1, 2) in jump.failing))
    for name, half in (("lower", f), ("upper", g)):
        rep = hm.check_family_condition(hm.constant_family(half), [ray])
        rows.append((f"jump_family_half:{name}", "", rep.bound, 0, rep.passed))
    return rows


# 11 -------------------------------------------------------------------------

def close_implies_homotopic(cfg: SuiteConfig, N: int = 128, shift: int = 3) -> list[Row]:
    X = generate("zplus", N)
    Y = generate("zplus", N + shift)
    f = MapWitness.from_function(X, Y, lambda x: x, "f")
    g = MapWitness.from_function(X, Y, lambda x: x + shift, "g")
    C = closeness_constant(f, g)
    prod = hm.homotopy_domain(X, 0)
    h = hm.homotopy_from_close(f, g, prod)
    scales = [0, 1, 2, 3, 4]
    radii = [0, 1, 2, 4, 8, 16]
    rep = hm.check_homotopy_map(h, prod, scales, radii, center=0)
    uf, ug = uniformity_control(f, scales), uniformity_control(g, scales)
    pf = properness_profile(f, [r + C for r in radii], 0)
    pg = properness_profile(g, [r + C for r in radii], 0)
    u_excess = max(b - (max(uf(s), ug(s)) + C) for s, b in rep.uniformity.rows())
    p_excess = max(b - min(pf(r + C), pg(r + C)) for r, b in rep.properness.rows())
    ends = hm.restriction_matches(h, prod, 0, f) and hm.restriction_matches(h, prod, 1, g)
    return [("close_homotopy_endpoints", "", 0 if ends else 1, 0, ends),
            ("close_homotopy_uniformity", 4, u_excess, 0, u_excess <= EPS),
            ("close_homotopy_properness", 16, p_excess, 0, p_excess <= EPS)]


# 12 -------------------------------------------------------------------------

AUDIT = [((5, 8), Fraction(1, 2), (9, 4)), ((0, 0), Fraction(1, 2), (0, 0)),
         ((3, 7), Fraction(0), (3, 7)), ((3, 7), Fraction(1), (10, 0)),
         ((2, 10), Fraction(1, 3), (5, 6)), ((4, 9), Fraction(2, 3), (10, 3)),
         ((1, 5), Fraction(1, 4), (2, 3)), ((6, 16), Fraction(3, 4), (18, 4)),
         ((0, 12), Fraction(5, 12), (5, 7)), ((7, 1), Fraction(1, 2), (7, 0))]


def flasque_checks(cfg: SuiteConfig) -> list[Row]:
    rows = []
    shift = "identity" if "flasque_shift" in cfg.inject else None
    w = fl.FlasqueWitness.named("zplus", n_max=2 * cfg.line[1][-1], shift=shift)
    tower = [generate("zplus", s) for s in cfg.line[1]]
    balls = list(range(9))
    rep = fl.certify_flasque(w, tower, list(range(9)), balls)
    rows.append(("flasque_closeness", "", rep.closeness, 1, rep.closeness == 1))
    esc_dev = max(abs(rep.escape[k] - (k + 1)) for k in balls)
    rows.append(("flasque_escape", 8, esc_dev, 0, esc_dev == 0))
    ctl_dev = max(abs(b - s) for s, b in rep.control.rows())
    rows.append(("flasque_iterate_union", 8, ctl_dev, 0, ctl_dev <= EPS and rep.stable))
    bad = sum(fl.flasque_value(w, x, i, t) != want for (x, i), t, want in AUDIT)
    rows.append(("flasque_homotopy_audit", len(AUDIT), bad, 0, bad == 0))

    w = fl.FlasqueWitness.named("zplus", n_max=64)
    reports, eq = [], []
    for M in (8, 12, 16):
        X = generate("zplus", M)
        fh = fl.flasque_homotopy(w, X, M, scales=[0, 1, 2], radii=[0, 1, 2, 4])
        reports.append(fh.report)
        eq.append(fl.equivalence_controls(w, X, M, [0, 1, 2, 4]))
        ok = fh.start_is_identity and fh.end_is_i0_Phi and fh.Phi_i0_identity
        rows.append((f"flasque_homotopy_endpoints:M={M}", "", fh.zplus_excess, 2,
                     ok and fh.zplus_excess <= 2))
    stable = hm.homotopy_tower_verdict(reports) and all(
        tables_equal(eq[-1][k], eq[-2][k]) for k in ("Phi", "i0"))
    rows.append(("zplus2_zplus_controls_stable", "", reports[-1].uniformity(2),
                 reports[-2].uniformity(2), stable))
    return rows


CHECKS: dict[int, tuple[str, Callable]] = {
    1: ("metric axioms", metric_axioms),
    2: ("cone identities", cone_identities),
    3: ("floor map bound", floor_map_bound),
    4: ("geodesification", geodesification),
    5: ("connectivity invariance", connectivity_replay),
    6: ("ray extraction", ray_extraction),
    7: ("asymptotic product", asymptotic_product),
    8: ("pullback property", pullback),
    9: ("X = X * Z+", canonical_equivalence),
    10: ("homotopy definitions", homotopy_definitions),
    11: ("close => homotopic", close_implies_homotopic),
    12: ("flasque", flasque_checks),
}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("COARSE_LAB_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(cfg: SuiteConfig) -> list[Row]:
    """All selected checks, rows prefixed by criterion number, in criterion order."""
    ids = [k for k in CHECKS if cfg.only is None or k in cfg.only]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda k: CHECKS[k][1](cfg), ids))
    out = []
    for k, rows in zip(ids, results):
        out.extend((f"{k}:{r[0]}",) + tuple(r[1:]) for r in rows)
    return out
