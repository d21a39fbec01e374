"""Finite metric spaces, model-space generators and truncation towers.

Every other module works on :class:`FiniteMetricSpace`.  A space is either
backed by a dense distance table or by an element-wise distance function
(used for asymptotic products and cones, whose dense tables would not fit in
memory).  Both kinds expose the same block/pairwise interface, so the
exhaustive scans elsewhere never need to know which one they got.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterator, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

EPS = 1e-9
_CHUNK = 2_000_000  # matrix entries per block in chunked scans


class MetricError(ValueError):
    pass


def format_label(label) -> str:
    """String form of a point label, used by the file formats."""
    if isinstance(label, str):
        return label
    if hasattr(label, "format"):
        return label.format()
    if isinstance(label, tuple):
        return ",".join(format_label(x) for x in label)
    if isinstance(label, (bool, np.bool_)):
        return str(bool(label))
    if isinstance(label, (int, np.integer)):
        return str(int(label))
    if isinstance(label, Fraction):
        return str(label)
    if isinstance(label, float):
        return repr(label)
    return str(label)


ElemFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FiniteMetricSpace:
    """Points with a symmetric distance table.

    ``dist`` is an ``n x n`` array.  Alternatively ``elem`` computes distances
    for broadcastable index arrays and the table is only materialised on
    demand.  Point order is the canonical order used for every tie-break.
    """

    def __init__(self, points: Sequence[Hashable], dist=None, *, elem: ElemFn | None = None,
                 name: str = "", model: "ModelSpace | None" = None,
                 close_pairs: Callable | None = None):
        self.points = tuple(points)
        self._index = {p: i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise MetricError("duplicate point labels")
        n = len(self.points)
        if dist is None and elem is None:
            raise MetricError("need a distance table or an element function")
        if dist is not None:
            dist = np.array(dist, dtype=float)
            if dist.shape != (n, n):
                raise MetricError(f"distance table has shape {dist.shape}, expected ({n}, {n})")
            dist.setflags(write=False)
        self._dist = dist
        self._elem = elem
        self._close_pairs = close_pairs
        self._by_string: dict[str, int] | None = None
        self.name = name
        self.model = model

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        kind = "dense" if self._dist is not None else "lazy"
        return f"FiniteMetricSpace({self.name or '?'}, n={len(self)}, {kind})"

    @property
    def n(self) -> int:
        return len(self.points)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except (KeyError, TypeError):
            pass
        if isinstance(label, str):
            if self._by_string is None:
                self._by_string = {format_label(p): i for i, p in enumerate(self.points)}
            if label in self._by_string:
                return self._by_string[label]
        raise KeyError(f"unknown point {label!r} in space {self.name or '?'}")

    def indices(self, labels) -> np.ndarray:
        return np.array([self.index(x) for x in labels], dtype=np.intp)

    def __contains__(self, label) -> bool:
        try:
            self.index(label)
        except KeyError:
            return False
        return True

    @property
    def is_dense(self) -> bool:
        return self._dist is not None

    @property
    def dist(self) -> np.ndarray:
        if self._dist is None:
            idx = np.arange(self.n)
            table = np.empty((self.n, self.n))
            step = max(1, _CHUNK // max(self.n, 1))
            for lo in range(0, self.n, step):
                table[lo:lo + step] = self._elem(idx[lo:lo + step, None], idx[None, :])
            table.setflags(write=False)
            self._dist = table
        return self._dist

    def pair_dist(self, i, j) -> np.ndarray:
        """Distances for broadcastable index arrays."""
        i = np.asarray(i, dtype=np.intp)
        j = np.asarray(j, dtype=np.intp)
        if self._dist is not None:
            return self._dist[i, j]
        return np.asarray(self._elem(i, j), dtype=float)

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if self._dist is not None:
            return self._dist[np.ix_(rows, cols)]
        return self.pair_dist(rows[:, None], cols[None, :])

    def d(self, x, y) -> float:
        return float(self.pair_dist(self.index(x), self.index(y)))

    def row_chunks(self, cols=None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(rows, block(rows, cols))`` covering every row."""
        cols = np.arange(self.n) if cols is None else np.asarray(cols, dtype=np.intp)
        step = max(1, _CHUNK // max(len(cols), 1))
        for lo in range(0, self.n, step):
            rows = np.arange(lo, min(lo + step, self.n))
            yield rows, self.block(rows, cols)

    def close_pairs(self, r: float) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(I, J, D)`` for every ordered pair with ``D <= r`` (diagonal included)."""
        if self._close_pairs is not None:
            yield from self._close_pairs(r)
            return
        for rows, blk in self.row_chunks():
            ii, jj = np.nonzero(blk <= r + EPS)
            yield rows[ii], jj, blk[ii, jj]

    def diameter(self) -> float:
        if self.n == 0:
            return 0.0
        return float(max(blk.max() for _, blk in self.row_chunks()))

    def eccentricity(self, label) -> float:
        i = self.index(label)
        return float(self.block([i], np.arange(self.n)).max())

    def distances_from(self, label) -> np.ndarray:
        return self.block([self.index(label)], np.arange(self.n))[0]

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        return FiniteMetricSpace(self.points, self.dist * factor, name=f"{self.name}*{factor:g}")

    def subspace(self, labels) -> "FiniteMetricSpace":
        idx = self.indices(labels)
        return FiniteMetricSpace([self.points[i] for i in idx], self.block(idx, idx),
                                 name=f"{self.name}|sub", model=self.model)

    def same_as(self, other: "FiniteMetricSpace") -> bool:
        if self is other:
            return True
        if self.points != other.points:
            return False
        return bool(np.allclose(self.dist, other.dist, atol=EPS, rtol=0))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    points: tuple
    excess: float = 0.0

    def __str__(self) -> str:
        pts = ", ".join(format_label(p) for p in self.points)
        return f"{self.kind} at ({pts}) by {self.excess:.3g}"


def validate_metric(space: FiniteMetricSpace, tol: float = EPS,
                    max_witnesses: int = 50) -> list[Violation]:
    """Exhaustive check of the metric axioms.

    Triangle witnesses are reported as ``(x, z, y)`` meaning
    ``d(x, z) > d(x, y) + d(y, z)``.  The report is empty iff every axiom
    holds; at most ``max_witnesses`` violations per kind are listed.
    """
    D = space.dist
    n = len(space)
    pts = space.points
    out: list[Violation] = []

    def add(kind, idx, excess):
        if sum(v.kind == kind for v in out) < max_witnesses:
            out.append(Violation(kind, tuple(pts[k] for k in idx), float(excess)))

    bad = np.argwhere(~np.isfinite(D))
    for i, j in bad:
        if i <= j:
            add("finiteness", (i, j), math.inf)
    if len(bad):
        return out
    for i, j in np.argwhere(D < -tol):
        add("nonnegativity", (i, j), -D[i, j])
    for i in np.nonzero(np.abs(np.diag(D)) > tol)[0]:
        add("zero diagonal", (i,), D[i, i])
    asym = np.abs(D - D.T)
    for i, j in np.argwhere(np.triu(asym > tol, 1)):
        add("symmetry", (i, j), asym[i, j])
    for y in range(n):
        slack = D - (D[:, y, None] + D[None, y, :])
        hits = np.argwhere(np.triu(slack > tol, 1))
        for x, z in hits[:max_witnesses]:
            add("triangle", (x, z, y), slack[x, z])
    return out


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class WeightedGraph:
    vertices: tuple
    edges: tuple  # (u, v, w)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        known = set(self.vertices)
        if len(known) != len(self.vertices):
            raise MetricError("duplicate vertices")
        for u, v, w in self.edges:
            if u not in known or v not in known:
                raise MetricError(f"edge ({u!r}, {v!r}) uses an unknown vertex")
            if u == v:
                raise MetricError(f"self-loop at {u!r}")
            if not w > 0:
                raise MetricError(f"edge ({u!r}, {v!r}) has non-positive weight {w}")


def shortest_path_metric(g: WeightedGraph, name: str = "") -> FiniteMetricSpace:
    """All-pairs shortest-path lengths of a connected weighted graph."""
    n = len(g.vertices)
    index = {v: i for i, v in enumerate(g.vertices)}
    best: dict[tuple[int, int], float] = {}
    for u, v, w in g.edges:
        key = (min(index[u], index[v]), max(index[u], index[v]))
        best[key] = min(best.get(key, math.inf), float(w))
    if best:
        rows, cols = zip(*best)
        data = list(best.values())
    else:
        rows, cols, data = (), (), []
    graph = coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    ncomp, comp = connected_components(graph, directed=False)
    if ncomp > 1:
        a = g.vertices[0]
        b = g.vertices[int(np.nonzero(comp != comp[0])[0][0])]
        raise MetricError(f"graph is disconnected: no path from {a!r} to {b!r}")
    D = shortest_path(graph, method="D", directed=False)
    return FiniteMetricSpace(g.vertices, D, name=name or "graph")


# ---------------------------------------------------------------------------
# balls, entourages, nets, covers


def ball(space: FiniteMetricSpace, p, r: float) -> list:
    """Closed ball ``B(p, r)`` in canonical order."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    row = space.distances_from(p)
    return [space.points[i] for i in np.nonzero(row <= r + EPS)[0]]


def entourage_pairs(space: FiniteMetricSpace, r: float) -> list[tuple]:
    """All ordered pairs at distance ``<= r``."""
    if r < 0:
        raise ValueError("scale must be nonnegative")
    pts = space.points
    out = []
    for I, J, _ in space.close_pairs(r):
        order = np.lexsort((J, I))
        out.extend((pts[i], pts[j]) for i, j in zip(I[order], J[order]))
    return out


@dataclass(frozen=True)
class Net:
    points: tuple
    constant: float


def greedy_net(space: FiniteMetricSpace, epsilon: float) -> Net:
    """Greedy epsilon-discrete, epsilon-dense subset.

    Points are scanned in canonical order; a point joins the net when it is at
    distance >= epsilon from everything chosen so far.  ``constant`` is the
    measured covering radius, which is < epsilon (or 0).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    n = len(space)
    nearest = np.full(n, np.inf)
    chosen = []
    for i in range(n):
        if nearest[i] >= epsilon - EPS:
            chosen.append(i)
            nearest = np.minimum(nearest, space.block([i], np.arange(n))[0])
    const = float(nearest.max()) if n else 0.0
    return Net(tuple(space.points[i] for i in chosen), max(const, 0.0))


@dataclass(frozen=True)
class Cover:
    count: int
    centers: tuple


def _cover_indices(space: FiniteMetricSpace, members: np.ndarray, r0: float) -> list[int]:
    if len(members) == 0:
        return []
    reach = space.block(members, members) <= r0 + EPS
    uncovered = np.ones(len(members), dtype=bool)
    centers = []
    while uncovered.any():
        gain = reach[:, uncovered].sum(axis=1)
        c = int(np.argmax(gain))
        centers.append(int(members[c]))
        uncovered &= ~reach[c]
    return centers


def covering_number(space: FiniteMetricSpace, subset, r0: float) -> Cover:
    """Greedy cover of ``subset`` by ``r0``-balls centred in ``subset``.

    Each round picks the member whose ball covers the most uncovered members
    (first in canonical order on ties).
    """
    if r0 < 0:
        raise ValueError("r0 must be nonnegative")
    members = np.sort(space.indices(subset)) if len(subset) else np.array([], dtype=np.intp)
    centers = _cover_indices(space, members, r0)
    return Cover(len(centers), tuple(space.points[i] for i in centers))


# ---------------------------------------------------------------------------
# model spaces


def _l1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b).sum(axis=-1).astype(float)


def _tree_metric(bits_per_letter: int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    # coords = (length, code); code packs the word with ``bits_per_letter`` bits per letter
    def metric(a, b):
        la, ca = a[..., 0], a[..., 1]
        lb, cb = b[..., 0], b[..., 1]
        m = np.minimum(la, lb)
        pa = ca >> (bits_per_letter * (la - m))
        pb = cb >> (bits_per_letter * (lb - m))
        x = pa ^ pb
        _, width = np.frexp(x.astype(float))
        differing = -(-width // bits_per_letter)
        lcp = m - np.where(x == 0, 0, differing)
        return (la + lb - 2 * lcp).astype(float)
    return metric


@dataclass(frozen=True)
class ModelSpace:
    """An unbounded model space known by a closed-form metric on labels.

    ``labels(size)`` lists the truncation at ``size`` in canonical order;
    ``coords`` turns labels into numeric coordinates, and ``metric`` evaluates
    distances on broadcastable coordinate arrays (last axis = coordinates).
    """

    name: str
    labels: Callable[[int], list]
    coords: Callable[[Sequence], np.ndarray]
    metric: Callable[[np.ndarray, np.ndarray], np.ndarray]
    base: Hashable = 0

    def space(self, size: int) -> FiniteMetricSpace:
        pts = self.labels(size)
        c = self.coords(pts)
        D = self.metric(c[:, None], c[None, :])
        return FiniteMetricSpace(pts, D, name=f"{self.name}({size})", model=self)

    def space_from_labels(self, labels: Sequence) -> FiniteMetricSpace:
        c = self.coords(labels)
        return FiniteMetricSpace(labels, self.metric(c[:, None], c[None, :]),
                                 name=f"{self.name}|labels", model=self)

    def label_dist(self, a: Sequence, b: Sequence) -> np.ndarray:
        """Element-wise distances between two equally long label lists."""
        return self.metric(self.coords(a), self.coords(b))


def _int_coords(labels) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64).reshape(len(labels), -1)


def _zplus() -> ModelSpace:
    return ModelSpace("zplus", lambda n: list(range(n + 1)), _int_coords, _l1, base=0)


def _zplus2() -> ModelSpace:
    return ModelSpace("zplus2_l1", lambda n: [(i, j) for i in range(n + 1) for j in range(n + 1)],
                      _int_coords, _l1, base=(0, 0))


def _grid2() -> ModelSpace:
    return ModelSpace("grid2_l1",
                      lambda n: [(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1)],
                      _int_coords, _l1, base=(0, 0))


def _binary_tree() -> ModelSpace:
    def labels(depth):
        out = ["r"]
        for k in range(1, depth + 1):
            out.extend("r" + format(v, f"0{k}b") for v in range(2 ** k))
        return out

    def coords(labels):
        arr = np.zeros((len(labels), 2), dtype=np.int64)
        for i, s in enumerate(labels):
            word = s[1:]
            arr[i] = (len(word), int(word, 2) if word else 0)
        return arr

    return ModelSpace("binary_tree", labels, coords, _tree_metric(1), base="r")


def _free_group(rank: int) -> ModelSpace:
    letters = "abcdefgh"[:rank]
    alphabet = letters + letters.upper()
    inverse = {a: a.swapcase() for a in alphabet}
    bits = max(1, math.ceil(math.log2(len(alphabet))))

    def labels(radius):
        out, frontier = ["e"], [""]
        for _ in range(radius):
            nxt = []
            for w in frontier:
                for a in alphabet:
                    if w and inverse[w[-1]] == a:
                        continue
                    nxt.append(w + a)
            out.extend(nxt)
            frontier = nxt
        return out

    def coords(labels):
        arr = np.zeros((len(labels), 2), dtype=np.int64)
        for i, s in enumerate(labels):
            word = "" if s == "e" else s
            code = 0
            for a in word:
                code = (code << bits) | alphabet.index(a)
            arr[i] = (len(word), code)
        return arr

    return ModelSpace(f"free{rank}", labels, coords, _tree_metric(bits), base="e")


def _abelian(gens: list[tuple[int, ...]]) -> ModelSpace:
    dim = len(gens[0])
    steps = {tuple(g) for g in gens} | {tuple(-x for x in g) for g in gens}
    steps.discard((0,) * dim)
    cache: dict[int, tuple[dict, int]] = {}

    def norms(radius):
        # word norms of every element of word length <= radius
        if radius not in cache:
            seen = {(0,) * dim: 0}
            frontier = [(0,) * dim]
            for k in range(1, radius + 1):
                nxt = []
                for v in frontier:
                    for s in steps:
                        w = tuple(a + b for a, b in zip(v, s))
                        if w not in seen:
                            seen[w] = k
                            nxt.append(w)
                frontier = nxt
            cache[radius] = (seen, radius)
        return cache[radius][0]

    def labels(radius):
        table = norms(radius)
        return sorted(table, key=lambda v: (table[v], v))

    def coords(labels):
        return np.asarray(labels, dtype=np.int64).reshape(len(labels), dim)

    def metric(a, b):
        diff = np.broadcast_arrays(a, b)[1] - np.broadcast_arrays(a, b)[0]
        flat = diff.reshape(-1, dim)
        # differences of group elements are group elements, so growing the table terminates
        radius = max(1, int(np.abs(flat).sum(axis=1).max())) if len(flat) else 1
        while True:
            table = norms(radius)
            out = np.array([table.get(tuple(int(x) for x in v), -1) for v in flat], dtype=float)
            if not (out < 0).any():
                return out.reshape(diff.shape[:-1])
            radius *= 2

    name = "abelian:" + ";".join(",".join(map(str, g)) for g in gens)
    return ModelSpace(name, labels, coords, metric, base=(0,) * dim)


def model_space(family: str) -> ModelSpace:
    """Look up a model by family name.

    ``zplus``, ``zplus2_l1``, ``grid2_l1``, ``binary_tree``, and
    ``cayley_ball[free:R]`` or ``cayley_ball[abelian:1,0;0,1]``.
    """
    simple = {"zplus": _zplus, "zplus2_l1": _zplus2, "grid2_l1": _grid2,
              "binary_tree": _binary_tree}
    if family in simple:
        return simple[family]()
    m = re.fullmatch(r"cayley_ball[\[(](.+)[\])]", family)
    if m:
        kind, _, arg = m.group(1).partition(":")
        if kind == "free":
            return _free_group(int(arg))
        if kind == "abelian":
            gens = [tuple(int(x) for x in g.split(",")) for g in arg.split(";") if g]
            if not gens or len({len(g) for g in gens}) != 1:
                raise MetricError(f"bad generator list {arg!r}")
            return _abelian(gens)
    raise MetricError(f"unknown model family {family!r}")


def generate(family: str, size: int) -> FiniteMetricSpace:
    return model_space(family).space(size)


# ---------------------------------------------------------------------------
# towers


@dataclass(frozen=True)
class Tower:
    levels: tuple
    embeddings: tuple  # embeddings[k][i] = index in levels[k+1] of point i of levels[k]
    family: str = ""
    sizes: tuple = ()
    model: ModelSpace | None = field(default=None, compare=False)

    @classmethod
    def from_levels(cls, levels: Sequence[FiniteMetricSpace], **kw) -> "Tower":
        emb = []
        for lo, hi in zip(levels, levels[1:]):
            emb.append(hi.indices(lo.points))
        return cls(tuple(levels), tuple(emb), **kw)

    @property
    def top(self) -> FiniteMetricSpace:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)

    def check(self) -> list[str]:
        problems = []
        for k, (lo, hi, e) in enumerate(zip(self.levels, self.levels[1:], self.embeddings)):
            if len(hi) <= len(lo):
                problems.append(f"level {k + 1} is not larger than level {k}")
            if len(set(e.tolist())) != len(e):
                problems.append(f"embedding {k} is not injective")
            elif not np.allclose(hi.block(e, e), lo.dist, atol=EPS, rtol=0):
                problems.append(f"embedding {k} is not isometric")
        return problems


def parse_tower(text: str) -> tuple[str, list[int]]:
    """Split ``family:s1,s2,...`` into its parts."""
    family, sep, sizes = text.rpartition(":")
    if not sep or not family:
        raise MetricError(f"expected FAMILY:SIZES, got {text!r}")
    try:
        values = [int(s) for s in sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise MetricError(f"bad tower sizes in {text!r}") from exc
    if not values:
        raise MetricError(f"empty tower in {text!r}")
    return family, values


def make_tower(family: str, sizes: Sequence[int]) -> Tower:
    sizes = list(sizes)
    if not sizes:
        raise MetricError("tower needs at least one size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise MetricError(f"tower sizes must increase strictly, got {sizes}")
    model = model_space(family)
    levels = [model.space(s) for s in sizes]
    return Tower.from_levels(levels, family=family, sizes=tuple(sizes), model=model)
