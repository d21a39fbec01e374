"""Flasque certification and the homotopy ``X x Z+ -> X`` built from a shift.

Shifts act on model labels, so iterates may leave the truncation at hand;
distances between iterates are taken in the model's closed-form metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .homotopy import ConePoint, HomotopyReport, check_homotopy_map, homotopy_domain
from .maps import ControlTable, MapWitness, _check_scales, tables_equal, uniformity_control
from .metric import EPS, FiniteMetricSpace, ModelSpace, model_space
from .product import Pair, ProductSpace, cartesian_product


SHIFTS: dict[str, Callable] = {
    "zplus": lambda n: n + 1,
    "zplus2_l1": lambda mn: (mn[0] + 1, mn[1] + 1),
}


@dataclass(eq=False)
class FlasqueWitness:
    model: ModelSpace
    shift: Callable
    n_max: int
    name: str = "phi"
    _orbits: dict = field(default_factory=dict, repr=False)

    @classmethod
    def named(cls, family: str, n_max: int = 64, shift: str | None = None) -> "FlasqueWitness":
        if shift == "identity":
            return cls(model_space(family), lambda x: x, n_max, "identity")
        if family not in SHIFTS:
            raise ValueError(f"no named shift for {family!r}")
        return cls(model_space(family), SHIFTS[family], n_max, "shift")

    def orbit(self, x) -> list:
        """``[x, phi(x), ..., phi^n_max(x)]`` (memoised)."""
        if x not in self._orbits:
            out = [x]
            for _ in range(self.n_max):
                out.append(self.shift(out[-1]))
            self._orbits[x] = out
        return self._orbits[x]

    def iterate(self, x, n: int):
        if n < 0:
            raise ValueError("negative iterate")
        if n > self.n_max:
            raise ValueError(f"iterate {n} exceeds the cap n_max={self.n_max}")
        return self.orbit(x)[n]

    def dist(self, a: Sequence, b: Sequence) -> np.ndarray:
        return self.model.label_dist(list(a), list(b))


@dataclass(frozen=True)
class FlasqueReport:
    closeness: float
    escape: dict             # ball radius k -> N_B for B(base, k)
    control: ControlTable    # sup_n of the uniformity control of phi^n
    controls: tuple          # the same table per tower level
    stable: bool
    passed: bool
    witness: object = None   # a point whose orbit stays in a ball

    def rows(self) -> list[tuple]:
        out = [("closeness", 0.0, self.closeness)]
        out += [("escape", float(k), float(v)) for k, v in sorted(self.escape.items())]
        out += [("iterate_union", s, b) for s, b in self.control.rows()]
        return out


def _escape_time(w: FlasqueWitness, X: FiniteMetricSpace, k: float):
    """Least ``N`` with ``phi^n(X)`` outside ``B(base, k)`` for ``N <= n <= n_max``."""
    pts = list(X.points)
    base = [w.model.base] * len(pts)
    last_hit, witness = -1, None
    for n in range(w.n_max + 1):
        it = [w.iterate(x, n) for x in pts]
        inside = w.dist(it, base) <= k + EPS
        if inside.any():
            last_hit = n
            witness = pts[int(np.argmax(inside))]
    if last_hit == w.n_max:
        return None, witness
    return last_hit + 1, None


def iterate_union_control(w: FlasqueWitness, X: FiniteMetricSpace, scales) -> ControlTable:
    """``k -> max_{n <= n_max} max_{d(x, y) <= k} d(phi^n x, phi^n y)``."""
    s = _check_scales(scales)
    I, J, D = [], [], []
    for a, b, d in X.close_pairs(float(s[-1])):
        I.append(a); J.append(b); D.append(d)
    I, J, D = np.concatenate(I), np.concatenate(J), np.concatenate(D)
    order = np.argsort(D, kind="stable")
    I, J, D = I[order], J[order], D[order]
    pos = np.searchsorted(D, s + EPS, side="right")
    best = np.zeros(len(s))
    pts = list(X.points)
    for n in range(w.n_max + 1):
        it = [w.iterate(x, n) for x in pts]
        img = w.dist([it[i] for i in I], [it[j] for j in J])
        run = np.maximum.accumulate(img) if len(img) else img
        got = np.where(pos > 0, run[np.maximum(pos - 1, 0)], 0.0)
        best = np.maximum(best, got)
    return ControlTable(s, best)


def certify_flasque(w: FlasqueWitness, tower: Sequence[FiniteMetricSpace], scales,
                    balls: Sequence[float] = (0, 1, 2, 4, 8)) -> FlasqueReport:
    """Measure the three flasque conditions on a tower of truncations.

    Closeness and escape times are taken at the top level; the iterate-union
    control is computed per level and must agree on the top two.
    """
    tower = list(tower)
    if not tower:
        raise ValueError("empty tower")
    top = tower[-1]
    pts = list(top.points)
    closeness = float(w.dist(pts, [w.shift(x) for x in pts]).max())
    escape, witness = {}, None
    for k in balls:
        nb, wit = _escape_time(w, top, k)
        if nb is None:
            witness = wit if witness is None else witness
            escape[k] = math.inf
        else:
            escape[k] = nb
    controls = tuple(iterate_union_control(w, X, scales) for X in tower)
    stable = len(controls) < 2 or tables_equal(controls[-1], controls[-2])
    passed = witness is None and stable
    return FlasqueReport(closeness, escape, controls[-1], controls, stable, passed, witness)


# ---------------------------------------------------------------------------
# the homotopy between id and i0 . Phi on X x Z+


def flasque_value(w: FlasqueWitness, x, i: int, t) -> tuple:
    """``(phi^floor(t i)(x), floor((1 - t) i))`` with exact floors."""
    t = Fraction(t)
    return (w.iterate(x, math.floor(t * i)), math.floor((1 - t) * i))


@dataclass(eq=False)
class FlasqueHomotopy:
    h: MapWitness               # domain.space -> target
    domain: ProductSpace        # (X x Z+) * cone([0, 1])
    target: FiniteMetricSpace   # X' x Z+, X' = X plus the needed iterates
    start_is_identity: bool     # t = 0 slice is id
    end_is_i0_Phi: bool         # t = 1 slice is (x, i) -> (phi^i x, 0)
    Phi_i0_identity: bool
    zplus_excess: float         # max |floor((1-t)i) - floor((1-s)j)| - |i - j| over pairs at distance <= 1
    X: FiniteMetricSpace = None
    report: HomotopyReport | None = None


def _extended(w: FlasqueWitness, X: FiniteMetricSpace, extra: list) -> FiniteMetricSpace:
    known = set(X.points)
    labels = list(X.points) + [y for y in dict.fromkeys(extra) if y not in known]
    return w.model.space_from_labels(labels)


def flasque_homotopy(w: FlasqueWitness, X: FiniteMetricSpace, M: int, R: float = 2,
                     scales=(0, 1, 2), radii=None, resolution="interval") -> FlasqueHomotopy:
    """Build ``h((x, i), (t, j)) = (phi^floor(t i)(x), floor((1 - t) i))`` on the product.

    ``X x Z+`` is truncated at ``i <= M`` and carries the max metric; its
    basepoint is ``(base, 0)``.
    """
    if M > w.n_max:
        raise ValueError(f"M={M} needs iterates beyond n_max={w.n_max}")
    Z = model_space("zplus").space(M)
    XZ = cartesian_product(X, Z)
    base = Pair(w.model.base, 0)
    dom = homotopy_domain(XZ, base, R=R, resolution=resolution)
    vals = []
    for k in range(len(dom)):
        xi = XZ.points[dom.left_idx[k]]
        q = ConePoint(*dom.right.points[dom.right_idx[k]])
        vals.append(flasque_value(w, xi.left, xi.right, q.x))
    Xe = _extended(w, X, [v[0] for v in vals]
                   + [w.iterate(x, i) for x in X.points for i in range(M + 1)])
    target = cartesian_product(Xe, Z)
    h = MapWitness(dom.space, target, target.indices([Pair(a, b) for a, b in vals]), "h")

    ts = [ConePoint(*dom.right.points[j]).x for j in dom.right_idx]
    src = [XZ.points[i] for i in dom.left_idx]
    img = [target.points[j] for j in h.images]
    start = all(im == s for im, s, t in zip(img, src, ts) if t == 0)
    end = all(im == Pair(w.iterate(s.left, s.right), 0) for im, s, t in zip(img, src, ts) if t == 1)
    Phi_i0 = all(w.iterate(x, 0) == x for x in X.points)

    excess = 0.0
    tf = np.array([float(t) for t in ts])
    ii = np.array([s.right for s in src])
    zc = np.array([b for _, b in vals])
    for I, J, _ in dom.space.close_pairs(1.0):
        excess = max(excess, float((np.abs(zc[I] - zc[J]) - np.abs(ii[I] - ii[J])).max()))
    rep = None
    if scales is not None:
        rep = check_homotopy_map(h, dom, scales, radii, center=Pair(w.model.base, 0))
    return FlasqueHomotopy(h, dom, target, start, end, Phi_i0, excess, X, rep)


def properness_levels(fh: FlasqueHomotopy, w: FlasqueWitness, radius: float) -> tuple[int, int, int]:
    """Level spread of the preimage of ``B = B((base, 0), radius)``.

    Returns the largest ``Z+`` coordinate ``j`` of a domain pair mapped into
    ``B``, the bound ``max_i N_{B_i}`` and the bound ``max_i N_{B_i} + max i``.
    Under the max metric every slice ``B_i`` is ``B(base, radius)``.
    """
    target = fh.target
    center = target.index(Pair(w.model.base, 0))
    near = target.pair_dist(fh.h.images, np.full(len(fh.h.images), center)) <= radius + EPS
    XZ = fh.domain.left
    js = [XZ.points[i].right for i in fh.domain.left_idx[near]]
    nb, _ = _escape_time(w, fh.X, radius)
    if nb is None:
        raise ValueError(f"ball of radius {radius:g} is never escaped within n_max")
    top = int(math.floor(radius + EPS))
    return (max(js) if js else 0), nb, nb + top


def equivalence_controls(w: FlasqueWitness, X: FiniteMetricSpace, M: int, scales) -> dict:
    """Uniformity tables of ``Phi: X x Z+ -> X`` and ``i0: X -> X x Z+``."""
    Z = model_space("zplus").space(M)
    XZ = cartesian_product(X, Z)
    Xe = _extended(w, X, [w.iterate(x, i) for x in X.points for i in range(M + 1)])
    Phi = MapWitness(XZ, Xe, Xe.indices([w.iterate(p.left, p.right) for p in XZ.points]), "Phi")
    i0 = MapWitness(X, XZ, XZ.indices([Pair(x, 0) for x in X.points]), "i0")
    return {"Phi": uniformity_control(Phi, scales), "i0": uniformity_control(i0, scales)}
