"""The asymptotic product ``X * Y`` and its pullback property.

Pairs ``(x, y)`` with ``|d(x, p) - d(y, q)| <= R`` carry the max metric
``max(d_X, d_Y)`` (``combiner="sum"`` gives the l1 variant).  The product is
a lazy :class:`FiniteMetricSpace`; close-pair scans walk the left factor's
neighbourhoods so exhaustive controls stay near-linear in the pair count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geodesic import connectivity_threshold
from .maps import MapWitness, closeness_constant, surjectivity_constant
from .metric import EPS, FiniteMetricSpace, MetricError, format_label, generate


class Pair(NamedTuple):
    left: object
    right: object

    def format(self) -> str:
        return f"{format_label(self.left)}|{format_label(self.right)}"


_COMBINERS = {"max": np.maximum, "sum": np.add}


def _floor(x):
    return np.floor(np.asarray(x) + EPS)


def floor_distance_map(space: FiniteMetricSpace, p) -> MapWitness:
    """``x -> floor(d(x, p))`` into ``{0, ..., ceil(diameter)}``."""
    radii = _floor(space.distances_from(p)).astype(np.int64)
    top = int(math.ceil(space.diameter() - EPS))
    target = generate("zplus", max(top, int(radii.max()) if len(radii) else 0))
    return MapWitness(space, target, radii, f"r_{format_label(p)}")


@dataclass(eq=False)
class ProductSpace:
    left: FiniteMetricSpace
    right: FiniteMetricSpace
    p: object
    q: object
    R: float
    combiner: str
    left_idx: np.ndarray
    right_idx: np.ndarray
    space: FiniteMetricSpace

    def __len__(self) -> int:
        return len(self.space)

    @property
    def pairs(self) -> list[Pair]:
        return list(self.space.points)

    @property
    def p_X(self) -> MapWitness:
        return MapWitness(self.space, self.left, self.left_idx, "p_X")

    @property
    def p_Y(self) -> MapWitness:
        return MapWitness(self.space, self.right, self.right_idx, "p_Y")

    def contains(self, x, y) -> bool:
        return Pair(x, y) in self.space

    def pair_index(self, x, y) -> int:
        return self.space.index(Pair(x, y))


def _pair_space(left, right, li, ri, combiner, name) -> FiniteMetricSpace:
    comb = _COMBINERS[combiner]
    labels = [Pair(left.points[a], right.points[b]) for a, b in zip(li, ri)]

    def elem(i, j):
        return comb(left.pair_dist(li[i], li[j]), right.pair_dist(ri[i], ri[j]))

    # bucket product points by left index for neighbourhood scans
    order = np.argsort(li, kind="stable")
    starts = np.searchsorted(li[order], np.arange(len(left) + 1))

    def close_pairs(r):
        nbrs: dict[int, list] = {}
        for I, J, _ in left.close_pairs(r):
            for a, b in zip(I.tolist(), J.tolist()):
                nbrs.setdefault(a, []).append(b)
        for a, bs in nbrs.items():
            rows = order[starts[a]:starts[a + 1]]
            if len(rows) == 0:
                continue
            cols = np.concatenate([order[starts[b]:starts[b + 1]] for b in bs])
            if len(cols) == 0:
                continue
            D = elem(rows[:, None], cols[None, :])
            ii, jj = np.nonzero(D <= r + EPS)
            yield rows[ii], cols[jj], D[ii, jj]

    return FiniteMetricSpace(labels, elem=elem, name=name, close_pairs=close_pairs)


def cartesian_product(left: FiniteMetricSpace, right: FiniteMetricSpace,
                      combiner: str = "max") -> FiniteMetricSpace:
    """The plain product ``X x Y`` with the combined metric."""
    li = np.repeat(np.arange(len(left)), len(right))
    ri = np.tile(np.arange(len(right)), len(left))
    return _pair_space(left, right, li, ri, combiner, f"{left.name}x{right.name}")


def build_product(left: FiniteMetricSpace, p, right: FiniteMetricSpace, q, R: float | None = None,
                  combiner: str = "max", c: float | None = None) -> ProductSpace:
    """Pairs with ``|d(x, p) - d(y, q)| <= R``, ordered by (left, right) index.

    ``R`` defaults to the connectivity threshold of ``right`` plus one.  When
    ``c`` is given, a warning is issued if ``right`` is not c-coarsely connected.
    """
    if combiner not in _COMBINERS:
        raise ValueError(f"unknown combiner {combiner!r}")
    if c is not None and connectivity_threshold(right) > c + EPS:
        warnings.warn(f"right factor is not {c:g}-coarsely connected", stacklevel=2)
    if R is None:
        R = connectivity_threshold(right) + 1
    if R < 0:
        raise ValueError("R must be nonnegative")
    a = left.distances_from(p)
    b = right.distances_from(q)
    order = np.argsort(b, kind="stable")
    sb = b[order]
    lo = np.searchsorted(sb, a - R - EPS, side="left")
    hi = np.searchsorted(sb, a + R + EPS, side="right")
    li, ri = [], []
    for x in range(len(left)):
        ys = np.sort(order[lo[x]:hi[x]])
        li.append(np.full(len(ys), x))
        ri.append(ys)
    li = np.concatenate(li).astype(np.intp) if li else np.array([], np.intp)
    ri = np.concatenate(ri).astype(np.intp) if ri else np.array([], np.intp)
    if len(li) == 0:
        raise MetricError(f"empty product: no pair within R={R:g} of the basepoint radii")
    space = _pair_space(left, right, li, ri, combiner, f"{left.name}*{right.name}")
    return ProductSpace(left, right, p, q, float(R), combiner, li, ri, space)


def enumerate_pairs(left, p, right, q, R) -> list[Pair]:
    """Brute-force pair set, independent of :func:`build_product`."""
    out = []
    for x in left.points:
        for y in right.points:
            if abs(left.d(x, p) - right.d(y, q)) <= R + EPS:
                out.append(Pair(x, y))
    return out


# ---------------------------------------------------------------------------
# well-definedness


@dataclass(frozen=True)
class InclusionReport:
    containment_defect: float  # max distance from a small pair to the big pair set (0 iff nested)
    constant: float            # max distance from a big pair to the small pair set
    hypothesis: bool | None    # R <= 2R' - c - 2 (same basepoints only)


def _cross(prod_a: ProductSpace, ia, prod_b: ProductSpace, ib) -> np.ndarray:
    comb = _COMBINERS[prod_a.combiner]
    return comb(prod_a.left.block(prod_a.left_idx[ia], prod_b.left_idx[ib]),
                prod_a.right.block(prod_a.right_idx[ia], prod_b.right_idx[ib]))


def _directed_gap(a: ProductSpace, b: ProductSpace) -> float:
    """``max_{u in a} min_{v in b} d(u, v)`` in the ambient product metric."""
    nb = np.arange(len(b))
    step = max(1, 2_000_000 // max(len(b), 1))
    worst = 0.0
    for lo in range(0, len(a), step):
        rows = np.arange(lo, min(lo + step, len(a)))
        worst = max(worst, float(_cross(a, rows, b, nb).min(axis=1).max()))
    return worst


def inclusion_constant(small: ProductSpace, big: ProductSpace, c: float | None = None) -> InclusionReport:
    """Measure the inclusion of one product into another over the same factors."""
    if not (small.left.same_as(big.left) and small.right.same_as(big.right)):
        raise ValueError("products over different factors")
    if small.combiner != big.combiner:
        raise ValueError("products use different combiners")
    defect = _directed_gap(small, big)
    const = _directed_gap(big, small)
    hyp = None
    if small.p == big.p and small.q == big.q:
        if c is None:
            c = connectivity_threshold(small.right)
        hyp = big.R <= 2 * small.R - c - 2 + EPS
    return InclusionReport(defect, const, hyp)


def basepoint_change_tolerance(prod: ProductSpace, p2, q2) -> float:
    """``R'' = d(p, p') + d(q, q') + R``."""
    return prod.left.d(prod.p, p2) + prod.right.d(prod.q, q2) + prod.R


def commutation_constant(prod: ProductSpace) -> float:
    """``max |floor d(x, p) - floor d(y, q)|`` over the pairs."""
    a = _floor(prod.left.distances_from(prod.p))[prod.left_idx]
    b = _floor(prod.right.distances_from(prod.q))[prod.right_idx]
    return float(np.abs(a - b).max())


# ---------------------------------------------------------------------------
# pullback


@dataclass(frozen=True)
class Mediator:
    map: MapWitness        # Z -> product
    K: float               # max d(gbar z, g z)
    R_comp: float          # max |d(f z, p) - d(g z, q)|
    gbar: MapWitness       # Z -> Y


def compatibility(f: MapWitness, g: MapWitness, p, q) -> np.ndarray:
    a = f.target.distances_from(p)[f.images]
    b = g.target.distances_from(q)[g.images]
    return np.abs(a - b)


def mediate(f: MapWitness, g: MapWitness, prod: ProductSpace, c: float,
            slack: float | None = None) -> Mediator:
    """The mediating map ``z -> (f z, gbar z)``.

    ``gbar(z)`` is the point nearest to ``g(z)`` among those whose radius is
    within ``c`` of ``d(f z, p)`` (first in canonical order on ties).  With
    ``slack`` given, any ``z`` whose compatibility exceeds ``prod.R + slack``
    is rejected.
    """
    if not f.source.same_as(g.source):
        raise ValueError("f and g must share their source")
    if not (f.target.same_as(prod.left) and g.target.same_as(prod.right)):
        raise ValueError("f and g must land in the product's factors")
    if c > prod.R + EPS:
        raise ValueError(f"slack c={c:g} exceeds the product tolerance R={prod.R:g}")
    Z = f.source
    comp = compatibility(f, g, prod.p, prod.q)
    if slack is not None:
        bad = np.nonzero(comp > prod.R + slack + EPS)[0]
        if len(bad):
            z = Z.points[bad[0]]
            raise ValueError(f"f and g are not compatible at {z!r}: "
                             f"|d(f z, p) - d(g z, q)| = {comp[bad[0]]:g} > {prod.R + slack:g}")
    a = prod.left.distances_from(prod.p)[f.images]
    b = prod.right.distances_from(prod.q)
    gbar = np.empty(len(Z), dtype=np.intp)
    ny = np.arange(len(prod.right))
    for k in range(len(Z)):
        cand = ny[np.abs(b - a[k]) <= c + EPS]
        if len(cand) == 0:
            raise ValueError(f"no point of Y has radius within c={c:g} of d(f({Z.points[k]!r}), p)"
                             f"; try a larger c")
        dist = prod.right.block([g.images[k]], cand)[0]
        gbar[k] = cand[int(np.argmax(dist <= dist.min() + EPS))]
    gbar_map = MapWitness(Z, prod.right, gbar, "gbar")
    idx = np.array([prod.pair_index(prod.left.points[x], prod.right.points[y])
                    for x, y in zip(f.images, gbar)], dtype=np.intp)
    med = MapWitness(Z, prod.space, idx, "<f,g>")
    K = closeness_constant(gbar_map, g)
    return Mediator(med, K, float(comp.max()) if len(comp) else 0.0, gbar_map)


@dataclass(frozen=True)
class Uniqueness:
    constant: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.constant <= self.bound + EPS


def mediator_uniqueness(h: MapWitness, f: MapWitness, g: MapWitness, prod: ProductSpace,
                        mediator: Mediator) -> Uniqueness:
    """Closeness of ``h`` to the mediator against ``C(p_X h, f) + C(p_Y h, g) + K``."""
    from .maps import compose
    const = closeness_constant(h, mediator.map)
    bound = (closeness_constant(compose(h, prod.p_X), f)
             + closeness_constant(compose(h, prod.p_Y), g) + mediator.K)
    return Uniqueness(const, bound)


def canonical_embed(space: FiniteMetricSpace, p, prod: ProductSpace) -> MapWitness:
    """``x -> (x, floor d(x, p))`` into ``space * zplus``."""
    if not prod.left.same_as(space) or prod.p != p:
        raise ValueError("product was not built over (space, p)")
    radii = _floor(space.distances_from(p)).astype(np.int64)
    idx = []
    for x, r in zip(space.points, radii):
        label = Pair(x, prod.right.points[prod.right.index(int(r))])
        if label not in prod.space:
            raise ValueError(f"({x!r}, {int(r)}) is not in the product; increase R or the zplus range")
        idx.append(prod.space.index(label))
    return MapWitness(space, prod.space, np.array(idx, dtype=np.intp), "embed")


def embed_surjectivity(embed: MapWitness) -> float:
    return surjectivity_constant(embed)
