"""Measured controls for maps between finite metric spaces.

A coarse map is uniform and proper; on a finite space both hold trivially, so
what we compute instead are the least control functions on an explicit scale
grid.  Whether a control is "coarse" is then judged by comparing the tables
across tower levels.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .metric import EPS, FiniteMetricSpace, covering_number, format_label


class OutOfRangeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MapWitness:
    """A total point map ``source -> target`` stored as target indices."""

    source: FiniteMetricSpace
    target: FiniteMetricSpace
    images: np.ndarray
    name: str = ""

    def __post_init__(self):
        img = np.asarray(self.images, dtype=np.intp)
        if img.shape != (len(self.source),):
            raise ValueError(f"map must be defined on all {len(self.source)} source points")
        if len(img) and (img.min() < 0 or img.max() >= len(self.target)):
            raise ValueError("image index outside the target")
        img.setflags(write=False)
        object.__setattr__(self, "images", img)

    @classmethod
    def from_function(cls, source, target, fn: Callable, name: str = "") -> "MapWitness":
        return cls(source, target, np.array([target.index(fn(x)) for x in source.points],
                                            dtype=np.intp), name)

    @classmethod
    def from_mapping(cls, source, target, mapping: dict, name: str = "") -> "MapWitness":
        lookup = {format_label(k): v for k, v in mapping.items()}
        img = []
        for x in source.points:
            key = x if x in mapping else format_label(x)
            if key not in mapping and key not in lookup:
                raise ValueError(f"map is not defined at {x!r}")
            img.append(target.index(mapping[key] if key in mapping else lookup[key]))
        return cls(source, target, np.array(img, dtype=np.intp), name)

    def __call__(self, label):
        return self.target.points[self.images[self.source.index(label)]]

    def as_dict(self) -> dict:
        return {x: self.target.points[j] for x, j in zip(self.source.points, self.images)}

    def image_set(self) -> np.ndarray:
        return np.unique(self.images)


def identity(space: FiniteMetricSpace) -> MapWitness:
    return MapWitness(space, space, np.arange(len(space)), "id")


def constant_map(source, target, value) -> MapWitness:
    return MapWitness(source, target, np.full(len(source), target.index(value)), "const")


@dataclass(frozen=True)
class ControlTable:
    """Nondecreasing scale -> bound table; lookups snap to the next tabulated scale."""

    scales: tuple
    bounds: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.scales)
        b = tuple(float(x) for x in self.bounds)
        if len(s) != len(b):
            raise ValueError("scales and bounds differ in length")
        if any(y < x for x, y in zip(s, s[1:])):
            raise ValueError("scales must be sorted ascending")
        if any(x < 0 for x in s):
            raise ValueError("scales must be nonnegative")
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def from_function(cls, scales: Iterable[float], fn: Callable[[float], float]) -> "ControlTable":
        scales = list(scales)
        return cls(scales, [fn(s) for s in scales])

    def __call__(self, r: float) -> float:
        if not self.scales or r > self.scales[-1] + EPS:
            raise OutOfRangeError(f"scale {r:g} exceeds the table grid "
                                  f"(max {self.scales[-1] if self.scales else 'none'})")
        k = int(np.searchsorted(np.array(self.scales), r - EPS, side="left"))
        return self.bounds[k]

    def __len__(self) -> int:
        return len(self.scales)

    def is_monotone(self) -> bool:
        return all(b >= a - EPS for a, b in zip(self.bounds, self.bounds[1:]))

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.scales, self.bounds))

    def dominated_by(self, other: "ControlTable") -> bool:
        return all(b <= other(s) + EPS for s, b in self.rows())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "bound"])
        for s, b in self.rows():
            w.writerow([repr(s), repr(b)])
        return buf.getvalue()


def tables_equal(a: ControlTable, b: ControlTable, tol: float = EPS) -> bool:
    """Same grid and bounds within ``tol``: the tower-stability test for controls."""
    return a.scales == b.scales and all(abs(x - y) <= tol for x, y in zip(a.bounds, b.bounds))


def _check_scales(scales: Sequence[float]) -> np.ndarray:
    s = np.asarray(list(scales), dtype=float)
    if len(s) == 0:
        raise ValueError("empty scale list")
    if np.any(np.diff(s) < 0):
        raise ValueError("scales must be sorted ascending")
    return s


def threshold_profile(chunks, scales: np.ndarray) -> np.ndarray:
    """``out[k] = max{value : key <= scales[k]}`` over ``(keys, values)`` chunks (0 if none)."""
    out = np.full(len(scales), -np.inf)
    for keys, values in chunks:
        if len(keys) == 0:
            continue
        order = np.argsort(keys, kind="stable")
        running = np.maximum.accumulate(values[order])
        pos = np.searchsorted(keys[order], scales + EPS, side="right")
        got = np.where(pos > 0, running[np.maximum(pos - 1, 0)], -np.inf)
        out = np.maximum(out, got)
    return np.where(np.isfinite(out), out, 0.0)


def uniformity_control(w: MapWitness, scales: Sequence[float]) -> ControlTable:
    """Least Phi with ``d(x, y) <= k  =>  d(f x, f y) <= Phi(k)``."""
    s = _check_scales(scales)
    if len(w.source) == 0:
        raise ValueError("empty source space")
    img = w.images

    def chunks():
        for I, J, D in w.source.close_pairs(float(s[-1])):
            yield D, w.target.pair_dist(img[I], img[J])

    return ControlTable(s, threshold_profile(chunks(), s))


def injectivity_control(w: MapWitness, scales: Sequence[float]) -> ControlTable:
    """Least bound with ``d(f x, f x') <= r  =>  d(x, x') <= bound(r)``."""
    s = _check_scales(scales)
    img = w.images
    idx = np.arange(len(w.source))

    def chunks():
        for rows, blk in w.source.row_chunks():
            keys = w.target.pair_dist(img[rows][:, None], img[idx][None, :])
            mask = keys <= s[-1] + EPS
            yield keys[mask], blk[mask]

    return ControlTable(s, threshold_profile(chunks(), s))


def properness_profile(w: MapWitness, radii: Sequence[float], center) -> ControlTable:
    """Diameter of the preimage of ``B(center, l)`` for each radius ``l``."""
    s = _check_scales(radii)
    c = w.target.index(center)
    to_center = w.target.pair_dist(w.images, np.full(len(w.images), c))
    order = np.argsort(to_center, kind="stable")
    sorted_d = to_center[order]
    bounds = []
    diam, have = 0.0, 0
    for r in s:
        upto = int(np.searchsorted(sorted_d, r + EPS, side="right"))
        if upto > have:
            new = order[have:upto]
            diam = max(diam, float(w.source.block(new, order[:upto]).max()))
            have = upto
        bounds.append(diam)
    return ControlTable(s, bounds)


def _same_spaces(f: MapWitness, g: MapWitness) -> None:
    if not (f.source.same_as(g.source) and f.target.same_as(g.target)):
        raise ValueError("maps do not share source and target")


def closeness_constant(f: MapWitness, g: MapWitness) -> float:
    """``max_x d(f x, g x)``."""
    _same_spaces(f, g)
    if len(f.images) == 0:
        return 0.0
    return float(f.target.pair_dist(f.images, g.images).max())


def surjectivity_constant(w: MapWitness) -> float:
    """``max_y d(y, im f)``."""
    img = w.image_set()
    if len(img) == 0:
        return np.inf
    return float(max(blk.min(axis=1).max() for _, blk in w.target.row_chunks(img)))


def compose(f: MapWitness, g: MapWitness) -> MapWitness:
    """``g . f`` (apply ``f`` first)."""
    if not f.target.same_as(g.source):
        raise ValueError("target of the first map is not the source of the second")
    return MapWitness(f.source, g.target, g.images[f.images], f"{g.name}.{f.name}")


@dataclass(frozen=True)
class QuasiInverse:
    inverse: MapWitness
    fg_constant: float  # closeness of f.g to id_target
    gf_constant: float  # closeness of g.f to id_source


def quasi_inverse(w: MapWitness) -> QuasiInverse:
    """Nearest-preimage inverse: ``g(y)`` minimises ``d(f x, y)``, first in canonical order."""
    inv = np.empty(len(w.target), dtype=np.intp)
    for rows, blk in w.target.row_chunks(w.images):
        best = blk.min(axis=1, keepdims=True)
        inv[rows] = np.argmax(blk <= best + EPS, axis=1)
    g = MapWitness(w.target, w.source, inv, "qinv")
    fg = closeness_constant(compose(g, w), identity(w.target))
    gf = closeness_constant(compose(w, g), identity(w.source))
    return QuasiInverse(g, fg, gf)


def transport_upper_control(phi_x: ControlTable, K: float, varphi: ControlTable,
                            scales: Sequence[float] | None = None) -> ControlTable:
    """Upper control of the target of a coarse equivalence.

    ``r -> phi_x(varphi(r + 2K)) + 2``; both lookups snap upward to the next
    tabulated scale and raise :class:`OutOfRangeError` beyond the grid.
    """
    if scales is None:
        scales = [s - 2 * K for s in varphi.scales if s - 2 * K >= -EPS]
        scales = [max(0.0, s) for s in scales]
    s = _check_scales(scales)
    return ControlTable(s, [phi_x(varphi(r + 2 * K)) + 2 for r in s])


@dataclass(frozen=True)
class ImageCover:
    centers: tuple        # images of the source cover centres
    scale: float          # S0 = Phi_f(R0)
    source_count: int
    covered: bool


def image_cover(w: MapWitness, subset, r0: float) -> ImageCover:
    """Push a greedy ``r0``-cover of ``subset`` forward and check it covers ``f(subset)``."""
    cover = covering_number(w.source, subset, r0)
    s0 = uniformity_control(w, [r0])(r0)
    centers = [w(x) for x in cover.centers]
    img = np.unique(w.images[w.source.indices(subset)]) if len(subset) else np.array([], int)
    if len(img) == 0:
        return ImageCover((), s0, 0, True)
    reach = w.target.block(img, w.target.indices(centers)).min(axis=1)
    return ImageCover(tuple(centers), s0, cover.count, bool((reach <= s0 + EPS).all()))


def tower_stable(values: Sequence[float], tol: float = EPS) -> bool:
    """A constant is accepted as scale-independent when the top two levels agree."""
    values = list(values)
    if len(values) < 2:
        return True
    return abs(values[-1] - values[-2]) <= tol


def grows(values: Sequence[float], tol: float = EPS) -> bool:
    """Strict growth across the last two levels: the finite signature of unboundedness."""
    values = list(values)
    return len(values) >= 2 and values[-1] > values[-2] + tol
