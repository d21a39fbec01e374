"""Cone spaces and coarse homotopies in their two equivalent forms.

A cone point is ``(x, i)`` with ``x`` in the base and level ``i >= 1``; the
distance is ``sqrt(i^2 + j^2 - (2 - d_T(x, y)^2) i j)``.  A homotopy is
either a map on ``X * cone([0, 1])`` or a family ``(h_t)`` on a parameter
grid; the conversions and checkers below measure both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .maps import (ControlTable, MapWitness, _check_scales, closeness_constant, tables_equal,
                   uniformity_control)
from .metric import EPS, FiniteMetricSpace, MetricError, Violation, format_label, validate_metric
from .product import Pair, ProductSpace, build_product


class ConePoint(NamedTuple):
    x: object     # base label; a Fraction in [0, 1] for the interval base
    level: int    # >= 1

    def format(self) -> str:
        return f"{format_label(self.x)}@{self.level}"


def cone_distance(dT, i, j) -> np.ndarray:
    """The cone formula on broadcastable arrays; rejects levels below 1."""
    i = np.asarray(i, dtype=float)
    j = np.asarray(j, dtype=float)
    if np.any(i < 1) or np.any(j < 1):
        raise ValueError("cone levels start at 1")
    dT = np.asarray(dT, dtype=float)
    # i^2 + j^2 - (2 - dT^2) ij rearranged: no cancellation near the diagonal
    return np.sqrt((i - j) ** 2 + (i * j) * (dT * dT))


def cone_metric(T: FiniteMetricSpace | None, a, b) -> float:
    """Distance between two cone points; ``T=None`` means the unit interval."""
    a, b = ConePoint(*a), ConePoint(*b)
    if a.level < 1 or b.level < 1:
        raise ValueError("cone levels start at 1")
    dT = abs(float(a.x) - float(b.x)) if T is None else T.d(a.x, b.x)
    return float(cone_distance(dT, a.level, b.level))


def parse_cone_point(text: str) -> ConePoint:
    x, _, lvl = str(text).rpartition("@")
    return ConePoint(Fraction(x), int(lvl))


@dataclass(eq=False)
class ConeSpace:
    base: FiniteMetricSpace | None  # None: unit interval
    N: int
    space: FiniteMetricSpace
    violations: list = field(default_factory=list)

    @property
    def basepoint(self) -> ConePoint:
        return self.space.points[0]

    @property
    def is_interval(self) -> bool:
        return self.base is None

    def t_values(self, level: int) -> list:
        return [p.x for p in self.space.points if p.level == level]

    def common_t_values(self) -> list:
        common = None
        for i in range(1, self.N + 1):
            vals = set(self.t_values(i))
            common = vals if common is None else common & vals
        return sorted(common or ())


def _interval_grid(level: int, resolution) -> list[Fraction]:
    if resolution == "interval":
        return [Fraction(k, level) for k in range(level + 1)]
    if isinstance(resolution, int):
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        return [Fraction(k, resolution) for k in range(resolution + 1)]
    vals = sorted({Fraction(v) for v in resolution})
    if not vals or vals[0] < 0 or vals[-1] > 1:
        raise ValueError("interval samples must lie in [0, 1]")
    return vals


def build_cone(T: FiniteMetricSpace | None = None, N: int = 8, resolution="interval",
               strict: bool = False, validate: bool = True) -> ConeSpace:
    """Levels ``1..N`` over ``T`` (or over a sampled unit interval when ``T`` is None).

    Interval resolutions: ``"interval"`` puts ``{0, 1/i, ..., 1}`` on level
    ``i``; an integer ``G`` puts ``{k/G}`` on every level; a list is used as
    is.  Metric violations are collected in ``violations``; with
    ``strict=True`` the first one raises :class:`MetricError`.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if T is None:
        pts = [ConePoint(t, i) for i in range(1, N + 1) for t in _interval_grid(i, resolution)]
        tt = np.array([float(p.x) for p in pts])
        lv = np.array([p.level for p in pts], dtype=float)

        def elem(I, J):
            return cone_distance(np.abs(tt[I] - tt[J]), lv[I], lv[J])
        name = f"cone([0,1],{N})"
    else:
        if len(T) == 0:
            raise ValueError("empty cone base")
        pts = [ConePoint(x, i) for i in range(1, N + 1) for x in T.points]
        bi = np.tile(np.arange(len(T)), N)
        lv = np.repeat(np.arange(1, N + 1), len(T)).astype(float)

        def elem(I, J):
            return cone_distance(T.pair_dist(bi[I], bi[J]), lv[I], lv[J])
        name = f"cone({T.name},{N})"
    space = FiniteMetricSpace(pts, elem=elem, name=name)
    cone = ConeSpace(T, N, space)
    if validate:
        cone.violations = validate_metric(space)
        if strict and cone.violations:
            raise MetricError(f"cone metric fails: {cone.violations[0]}")
    return cone


def path_closure(cone: ConeSpace) -> FiniteMetricSpace:
    """Largest metric below the cone formula (shortest paths over the formula's values)."""
    from scipy.sparse.csgraph import shortest_path
    D = shortest_path(np.array(cone.space.dist), method="FW", directed=False)
    return FiniteMetricSpace(cone.space.points, D, name=cone.space.name + "+closure")


def worst_triangle_excess(cone: ConeSpace) -> tuple[float, tuple | None]:
    """Largest ``d(x, z) - d(x, y) - d(y, z)`` over all triples, with its witness."""
    D = cone.space.dist
    best, wit = 0.0, None
    for y in range(len(D)):
        slack = D - (D[:, y, None] + D[None, y, :])
        k = int(np.argmax(slack))
        x, z = divmod(k, len(D))
        if slack[x, z] > best:
            best = float(slack[x, z])
            pts = cone.space.points
            wit = (pts[x], pts[y], pts[z])
    return best, wit


# ---------------------------------------------------------------------------
# entourage check along levels


def levels_bounded(levels: Sequence[float], values: Sequence[float], tol: float = EPS) -> bool:
    """Finite boundedness proxy: no new record over the top quarter of the level range.

    A sequence that keeps setting records as the level grows is read as
    unbounded; one whose maximum is already reached below is read as bounded.
    """
    lv = np.asarray(levels, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) == 0 or lv.min() == lv.max():
        return True
    cut = lv.min() + 0.75 * (lv.max() - lv.min())
    top, rest = v[lv > cut], v[lv <= cut]
    if len(top) == 0 or len(rest) == 0:
        return True
    return bool(top.max() <= rest.max() + tol)


@dataclass(frozen=True)
class EntourageFit:
    passed: bool
    level_gap: float   # sup |n_i - m_i|
    c: float           # least c with d_T(x_i, y_i) <= c / n_i for all i


def cone_entourage_check(pairs, T: FiniteMetricSpace | None = None,
                         budget: tuple[float, float] | None = None) -> EntourageFit:
    """Fit the level-gap and base-distance constants of a pair sequence.

    ``budget=(gap, c)`` fixes the allowed constants; otherwise both fitted
    sequences must stay bounded along the levels (see :func:`levels_bounded`).
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty pair sequence")
    n = np.array([ConePoint(*a).level for a, _ in pairs], dtype=float)
    m = np.array([ConePoint(*b).level for _, b in pairs], dtype=float)
    if T is None:
        dT = np.array([abs(float(ConePoint(*a).x) - float(ConePoint(*b).x)) for a, b in pairs])
    else:
        dT = np.array([T.d(ConePoint(*a).x, ConePoint(*b).x) for a, b in pairs])
    gaps = np.abs(n - m)
    need = dT * n
    gap, c = float(gaps.max()), float(need.max())
    if budget is not None:
        ok = gap <= budget[0] + EPS and c <= budget[1] + EPS
    else:
        ok = levels_bounded(n, gaps) and levels_bounded(n, need)
    return EntourageFit(ok, gap, c)


# ---------------------------------------------------------------------------
# homotopies as maps on X * cone


def homotopy_domain(X: FiniteMetricSpace, p, R: float = 2, N: int | None = None,
                    resolution="interval", combiner: str = "max") -> ProductSpace:
    """``X * cone([0, 1])`` with cone basepoint ``(0, 1)``.

    ``N`` defaults to the least level count whose cone radii reach past every
    ``d(x, p)``.  The cone is not validated here (that is :func:`build_cone`'s
    job with ``validate=True``).
    """
    if N is None:
        N = int(math.ceil(X.eccentricity(p) + R)) + 2
    cone = build_cone(None, N, resolution, validate=False)
    prod = build_product(X, p, cone.space, cone.basepoint, R, combiner)
    prod.cone = cone
    return prod


def _cone_t(prod: ProductSpace) -> list:
    return [ConePoint(*prod.right.points[k]).x for k in prod.right_idx]


def homotopy_from_close(f: MapWitness, g: MapWitness, prod: ProductSpace) -> MapWitness:
    """``h(x, (0, i)) = f(x)`` and ``h(x, (t, i)) = g(x)`` for ``t > 0``."""
    if not f.source.same_as(prod.left) or not g.source.same_as(prod.left):
        raise ValueError("f and g must be defined on the product's left factor")
    if not f.target.same_as(g.target):
        raise ValueError("f and g must share a target")
    t = np.array([float(v) for v in _cone_t(prod)])
    img = np.where(t == 0, f.images[prod.left_idx], g.images[prod.left_idx])
    return MapWitness(prod.space, f.target, img, "h")


def restrict_at(h: MapWitness, prod: ProductSpace, t) -> dict:
    """``x -> {h(x, (t, i))}`` over the pairs with parameter ``t``."""
    out: dict = {}
    for k, tv in enumerate(_cone_t(prod)):
        if tv == t:
            x = prod.left.points[prod.left_idx[k]]
            out.setdefault(x, set()).add(h.target.points[h.images[k]])
    return out


def restriction_matches(h: MapWitness, prod: ProductSpace, t, f: MapWitness) -> bool:
    """Pointwise equality of ``h`` on the ``t`` slice with ``f``."""
    got = restrict_at(h, prod, t)
    return bool(got) and all(vals == {f(x)} for x, vals in got.items())


@dataclass(frozen=True)
class HomotopyReport:
    uniformity: ControlTable
    properness: ControlTable   # diameter in X of the projected preimage of B(center, l)


def projected_properness(h: MapWitness, prod: ProductSpace, radii, center) -> ControlTable:
    s = _check_scales(radii)
    to_c = h.target.pair_dist(h.images, np.full(len(h.images), h.target.index(center)))
    bounds = []
    for r in s:
        xs = np.unique(prod.left_idx[to_c <= r + EPS])
        bounds.append(float(prod.left.block(xs, xs).max()) if len(xs) else 0.0)
    return ControlTable(s, bounds)


def check_homotopy_map(h: MapWitness, prod: ProductSpace, scales, radii=None,
                       center=None) -> HomotopyReport:
    """Measured uniformity and (X-projected) properness tables of ``h``."""
    if not h.source.same_as(prod.space):
        raise ValueError("h must be defined on the product")
    radii = scales if radii is None else radii
    center = h.target.points[h.images[0]] if center is None else center
    return HomotopyReport(uniformity_control(h, scales),
                          projected_properness(h, prod, radii, center))


def homotopy_tower_verdict(reports: Sequence[HomotopyReport]) -> bool:
    """Controls are accepted as coarse when the top two tower levels agree."""
    if len(reports) < 2:
        return True
    a, b = reports[-2], reports[-1]
    return tables_equal(a.uniformity, b.uniformity) and tables_equal(a.properness, b.properness)


# ---------------------------------------------------------------------------
# families


def default_grid(k: int = 16) -> tuple:
    return tuple(Fraction(j, k) for j in range(k + 1))


@dataclass(eq=False)
class HomotopyFamily:
    """Maps ``h_t`` on a parameter grid; ``rule`` supplies off-grid parameters."""

    grid: tuple
    maps: tuple
    c: float = 1.0
    rule: Callable[[Fraction], MapWitness] | None = None

    def __post_init__(self):
        self.grid = tuple(Fraction(t) for t in self.grid)
        if list(self.grid) != sorted(set(self.grid)):
            raise ValueError("parameter grid must be strictly increasing")
        if not self.grid or self.grid[0] != 0 or self.grid[-1] != 1:
            raise ValueError("parameter grid must include 0 and 1")
        if len(self.maps) != len(self.grid):
            raise ValueError("one map per grid value required")
        src, tgt = self.maps[0].source, self.maps[0].target
        for m in self.maps:
            if not (m.source.same_as(src) and m.target.same_as(tgt)):
                raise ValueError("family maps must share source and target")
        self._lookup = dict(zip(self.grid, self.maps))
        self._cache: dict = {}

    @classmethod
    def from_rule(cls, rule: Callable[[Fraction], MapWitness], grid=None, c: float = 1.0):
        grid = default_grid() if grid is None else tuple(Fraction(t) for t in grid)
        return cls(grid, tuple(rule(t) for t in grid), c, rule)

    @property
    def source(self) -> FiniteMetricSpace:
        return self.maps[0].source

    @property
    def target(self) -> FiniteMetricSpace:
        return self.maps[0].target

    def has(self, t) -> bool:
        return Fraction(t) in self._lookup or self.rule is not None

    def at(self, t) -> MapWitness:
        t = Fraction(t)
        if t in self._lookup:
            return self._lookup[t]
        if self.rule is None:
            raise KeyError(f"parameter {t} is not on the grid")
        if t not in self._cache:
            self._cache[t] = self.rule(t)
        return self._cache[t]

    def nearest(self, t) -> Fraction:
        """Nearest grid value, ties to the lower one."""
        t = Fraction(t)
        return min(self.grid, key=lambda g: (abs(g - t), g))


def family_to_map(fam: HomotopyFamily, prod: ProductSpace) -> MapWitness:
    """``(x, (t, i)) -> h_t(x)``; off-grid ``t`` uses the rule or else the nearest grid value."""
    if not fam.source.same_as(prod.left):
        raise ValueError("family source differs from the product's left factor")
    ts = _cone_t(prod)
    img = np.empty(len(ts), dtype=np.intp)
    for k, t in enumerate(ts):
        m = fam.at(t) if fam.has(t) else fam.at(fam.nearest(t))
        img[k] = m.images[prod.left_idx[k]]
    return MapWitness(prod.space, fam.target, img, "h")


def default_selector(prod: ProductSpace, level_offset: int = 0) -> Callable:
    """``x -> floor(d(x, p))`` shifted by ``level_offset`` and clamped to ``[1, N]``."""
    N = max(ConePoint(*q).level for q in prod.right.points)
    radii = np.floor(prod.left.distances_from(prod.p) + EPS).astype(int)

    def select(x) -> int:
        return int(min(max(radii[prod.left.index(x)] + level_offset, 1), N))
    return select


def map_to_family(h: MapWitness, prod: ProductSpace, grid=None, selector=None,
                  c: float = 1.0) -> HomotopyFamily:
    """``h_t(x) = h(x, (t, i_x))`` for a level selector ``i_x``.

    ``grid`` defaults to the parameter values present on every cone level.
    """
    if grid is None:
        common = None
        for lvl in {ConePoint(*q).level for q in prod.right.points}:
            vals = {ConePoint(*q).x for q in prod.right.points if ConePoint(*q).level == lvl}
            common = vals if common is None else common & vals
        grid = sorted(common or ())
    grid = tuple(Fraction(t) for t in grid)
    select = default_selector(prod) if selector is None else selector
    X = prod.left
    maps = []
    for t in grid:
        img = np.empty(len(X), dtype=np.intp)
        for a, x in enumerate(X.points):
            pair = Pair(x, ConePoint(t, select(x)))
            if pair not in prod.space:
                raise ValueError(f"selector gives {format_label(pair)}, which is not in the product")
            img[a] = h.images[prod.space.index(pair)]
        maps.append(MapWitness(X, h.target, img, f"h_{t}"))
    return HomotopyFamily(grid, tuple(maps), c)


def seam_bound(h: MapWitness, prod: ProductSpace, fam: HomotopyFamily, selector=None) -> float:
    """Bound on ``C(h, family_to_map(map_to_family(h)))`` from the uniformity of ``h``.

    Each pair ``(x, (t, i))`` is compared with ``(x, (t', i_x))`` where ``t'``
    is the grid value used for ``t``; ``h`` moves them at most ``Phi_h(g)``
    apart, ``g`` being the largest such cone distance.
    """
    select = default_selector(prod) if selector is None else selector
    gap = 0.0
    for k in range(len(prod)):
        x = prod.left.points[prod.left_idx[k]]
        q = ConePoint(*prod.right.points[prod.right_idx[k]])
        t2 = q.x if q.x in fam.grid else fam.nearest(q.x)
        gap = max(gap, cone_metric(None, q, (t2, select(x))))
    return uniformity_control(h, [gap])(gap)


# ---------------------------------------------------------------------------
# the family condition along rays


@dataclass(frozen=True)
class FamilyReport:
    passed: bool
    bound: float               # largest measured d(h_{t_i}(rho(i)), h_t(rho(i)))
    failing: tuple             # parameters whose sequence grows
    per_t: dict = field(default_factory=dict, compare=False)


def _approach(fam: HomotopyFamily, t: Fraction, i: int) -> list:
    c = Fraction(fam.c)
    if fam.rule is not None:
        out = [s for s in (t - c / (2 * i), t + c / (2 * i)) if 0 <= s <= 1]
        return out or [t]
    out = [s for s in fam.grid if abs(s - t) < c / i]
    if not out:
        raise ValueError(f"no grid parameter within {float(c)}/{i} of t={t}; refine the grid")
    return out


def check_family_condition(fam: HomotopyFamily, rays, ts=None,
                           budget: float | None = None) -> FamilyReport:
    """Measure ``sup_i d(h_{t_i}(rho(i)), h_t(rho(i)))`` for sequences ``|t - t_i| < c/i``.

    With a rule the two sequences ``t -+ c/(2i)`` are used; without one every
    grid value within ``c/i`` is tried.  ``rho(i)`` is the ``i``-th member of
    each ray (``i >= 1``).  Passing means every sequence stays bounded (by
    ``budget`` when given, else by :func:`levels_bounded`).
    """
    ts = fam.grid if ts is None else tuple(Fraction(t) for t in ts)
    Y = fam.target
    rays = [list(getattr(r, "points", r)) for r in rays]
    worst, failing, per_t = 0.0, [], {}
    for t in ts:
        if not fam.has(t):
            raise ValueError(f"parameter {t} is neither on the grid nor covered by a rule")
        ht = fam.at(t)
        ok, tmax = True, 0.0
        for ray in rays:
            idx = fam.source.indices(ray)
            levels, vals = [], []
            for i in range(1, len(idx)):
                a = ht.images[idx[i]]
                v = max(float(Y.pair_dist(fam.at(s).images[idx[i]], a)) for s in _approach(fam, t, i))
                levels.append(i)
                vals.append(v)
            if vals:
                tmax = max(tmax, max(vals))
                if budget is not None:
                    ok &= max(vals) <= budget + EPS
                else:
                    ok &= levels_bounded(levels, vals)
        per_t[t] = tmax
        worst = max(worst, tmax)
        if not ok:
            failing.append(t)
    return FamilyReport(not failing, worst, tuple(failing), per_t)


def close_map_family(f: MapWitness, g: MapWitness, grid=None, c: float = 1.0) -> HomotopyFamily:
    """``h_0 = f`` and ``h_t = g`` for ``t > 0``, the family form of :func:`homotopy_from_close`."""
    closeness_constant(f, g)  # validates shared spaces
    return HomotopyFamily.from_rule(lambda t: f if t == 0 else g, grid, c)


def jump_family(f: MapWitness, g: MapWitness, at=Fraction(1, 2), grid=None,
                c: float = 1.0) -> HomotopyFamily:
    """``h_t = f`` for ``t < at`` and ``g`` from ``at`` on."""
    at = Fraction(at)
    return HomotopyFamily.from_rule(lambda t: f if t < at else g, grid, c)


def constant_family(f: MapWitness, grid=None, c: float = 1.0) -> HomotopyFamily:
    return HomotopyFamily.from_rule(lambda t: f, grid, c)


def triangle_violations(cone: ConeSpace) -> list[Violation]:
    return [v for v in cone.violations if v.kind == "triangle"]
