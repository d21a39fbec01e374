"""c-paths, coarse connectivity, upper controls and c-geodesification."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree, shortest_path

from .maps import ControlTable, MapWitness, _check_scales, threshold_profile
from .metric import EPS, FiniteMetricSpace, MetricError, format_label


class DisconnectedError(MetricError):
    pass


def threshold_graph(space: FiniteMetricSpace, c: float) -> csr_matrix:
    """Adjacency of the Rips 1-skeleton at scale ``c`` (no loops, sorted indices)."""
    rows, cols = [], []
    for I, J, _ in space.close_pairs(c):
        keep = I != J
        rows.append(I[keep])
        cols.append(J[keep])
    n = len(space)
    r = np.concatenate(rows) if rows else np.array([], dtype=np.intp)
    k = np.concatenate(cols) if cols else np.array([], dtype=np.intp)
    g = coo_matrix((np.ones(len(r), dtype=np.int8), (r, k)), shape=(n, n)).tocsr()
    g.sort_indices()
    return g


def hop_matrix(space: FiniteMetricSpace, c: float) -> np.ndarray:
    """Minimal number of steps of a c-path between each pair (inf if none)."""
    return shortest_path(threshold_graph(space, c), unweighted=True, directed=False)


def hops_from(space: FiniteMetricSpace, c: float, source) -> np.ndarray:
    i = space.index(source)
    return shortest_path(threshold_graph(space, c), unweighted=True, directed=False, indices=i)


@dataclass(frozen=True)
class CPath:
    points: tuple
    step: float

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def is_valid(self, space: FiniteMetricSpace) -> bool:
        idx = space.indices(self.points)
        return bool(np.all(space.pair_dist(idx[:-1], idx[1:]) <= self.step + EPS))


def min_cpath(space: FiniteMetricSpace, c: float, x, y) -> CPath | None:
    """Shortest c-path from ``x`` to ``y`` by breadth-first search.

    Neighbours are visited in canonical order, so the returned path is the
    lexicographically least shortest one.  ``None`` when no c-path exists.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    g = threshold_graph(space, c)
    s, t = space.index(x), space.index(y)
    parent = {s: -1}
    queue = deque([s])
    while queue and t not in parent:
        u = queue.popleft()
        for v in g.indices[g.indptr[u]:g.indptr[u + 1]]:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if t not in parent:
        return None
    path = [t]
    while parent[path[-1]] != -1:
        path.append(parent[path[-1]])
    return CPath(tuple(space.points[i] for i in reversed(path)), c)


def connectivity_threshold(space: FiniteMetricSpace) -> float:
    """Least c such that the space is c-coarsely connected (bottleneck of a spanning tree)."""
    n = len(space)
    if n <= 1:
        return 0.0
    if space.is_dense or n <= 3000:
        D = np.array(space.dist)
        # coincident points would read as missing edges
        D[(D <= 0) & ~np.eye(n, dtype=bool)] = EPS
        tree = minimum_spanning_tree(D)
        return float(tree.data.max()) if tree.nnz else 0.0
    r = 1.0
    while True:
        rows, cols, vals = [], [], []
        for I, J, D in space.close_pairs(r):
            keep = I < J
            rows.append(I[keep]); cols.append(J[keep]); vals.append(np.maximum(D[keep], EPS))
        g = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n)).tocsr()
        if connected_components(g, directed=False)[0] == 1:
            return float(minimum_spanning_tree(g).data.max())
        r *= 2


def upper_control(space: FiniteMetricSpace, c: float, scales) -> ControlTable:
    """Least admissible Phi(X, c): max minimal c-path point count over pairs at distance <= r."""
    s = _check_scales(scales)
    H = hop_matrix(space, c)
    bad = np.argwhere(~np.isfinite(H))
    if len(bad):
        i, j = bad[0]
        raise DisconnectedError(f"not {c:g}-coarsely connected: no c-path from "
                                f"{space.points[i]!r} to {space.points[j]!r}")

    def chunks():
        for rows, blk in space.row_chunks():
            yield blk.ravel(), H[rows].ravel() + 1

    return ControlTable(s, threshold_profile(chunks(), s))


# ---------------------------------------------------------------------------
# geodesification


@dataclass(frozen=True, eq=False)
class Realization:
    """Subdivided geometric realisation of the Rips 1-skeleton.

    Realised points are the base vertices (in base order) followed by the
    interior samples ``k/m`` of each edge.  Every edge has length 1.
    """

    base: FiniteMetricSpace
    c: float
    m: int
    space: FiniteMetricSpace
    edges: tuple          # (i, j) base indices with i < j
    edge_of: np.ndarray   # realised index -> edge number, -1 for vertices
    position: np.ndarray  # realised index -> k (samples) or 0 (vertices)
    phi: np.ndarray       # realised index -> base index

    def phi_map(self) -> MapWitness:
        return MapWitness(self.space, self.base, self.phi, "phi_c")


def geodesify(space: FiniteMetricSpace, c: float, m: int = 2) -> Realization:
    if m < 1:
        raise ValueError("subdivision must be >= 1")
    n = len(space)
    g = threshold_graph(space, c)
    if n and connected_components(g, directed=False)[0] > 1:
        comp = connected_components(g, directed=False)[1]
        j = int(np.nonzero(comp != comp[0])[0][0])
        raise DisconnectedError(f"threshold graph at c={c:g} separates "
                                f"{space.points[0]!r} from {space.points[j]!r}")
    upper = coo_matrix(g).tocsr()
    ii, jj = upper.nonzero()
    keep = ii < jj
    edges = sorted(zip(ii[keep].tolist(), jj[keep].tolist()))

    labels = [format_label(x) for x in space.points]
    edge_of = [-1] * n
    position = [0] * n
    a_list, b_list = [], []
    nxt = n
    for e, (i, j) in enumerate(edges):
        prev = i
        for k in range(1, m):
            labels.append(f"e:{format_label(space.points[i])}:{format_label(space.points[j])}:{k}/{m}")
            edge_of.append(e)
            position.append(k)
            a_list.append(prev); b_list.append(nxt)
            prev = nxt
            nxt += 1
        a_list.append(prev); b_list.append(j)
    total = nxt
    # integer weights in units of 1/m keep distances exact
    G = coo_matrix((np.ones(len(a_list)), (a_list, b_list)), shape=(total, total)).tocsr()
    D = shortest_path(G, method="D", directed=False, unweighted=True) / m
    real = FiniteMetricSpace(labels, D, name=f"geod({space.name},{c:g},{m})")

    edge_of = np.array(edge_of, dtype=np.intp)
    position = np.array(position, dtype=np.intp)
    phi = np.arange(total)
    phi[:n] = np.arange(n)
    for t in range(n, total):
        i, j = edges[edge_of[t]]
        phi[t] = i if D[t, i] <= D[t, j] + EPS else j
    return Realization(space, c, m, real, tuple(edges), edge_of, position, phi)


def phi_c(real: Realization, t) -> object:
    """Nearer endpoint of the edge carrying ``t`` (the first endpoint on ties)."""
    return real.base.points[real.phi[real.space.index(t)]]


@dataclass(frozen=True)
class GeodesificationCheck:
    uniformity_slack: float   # min over pairs of (n+1)c - d(phi t, phi s)
    injectivity_slack: float  # min over pairs of Phi(k)+1 - d(s, t)
    surjective: bool

    @property
    def passed(self) -> bool:
        return self.uniformity_slack >= -EPS and self.injectivity_slack >= -EPS and self.surjective


def check_geodesification(real: Realization) -> GeodesificationCheck:
    """Exhaustive replay of both comparison bounds for phi_c."""
    base, R = real.base, real.space
    dists = np.unique(np.round(base.dist, 9))
    phi_table = upper_control(base, real.c, dists)
    phi_vals = np.array(phi_table.bounds)
    uni, inj = np.inf, np.inf
    for rows, blk in R.row_chunks():
        db = base.pair_dist(real.phi[rows][:, None], real.phi[None, :])
        n_int = np.ceil(blk - EPS)
        uni = min(uni, float(((n_int + 1) * real.c - db).min()))
        k = np.searchsorted(dists, db - EPS, side="left")
        inj = min(inj, float((phi_vals[k] + 1 - blk).min()))
    surj = len(np.unique(real.phi)) == len(base)
    return GeodesificationCheck(uni, inj, surj)


def replay_connectivity(f: MapWitness, c: float, y, y2) -> tuple[list, float]:
    """Build the path ``y, f(x), f(a_1), ..., f(x'), y'`` through a coarsely surjective map.

    Returns the path and ``e = max(K, d)`` with ``K`` the surjectivity constant
    and ``d`` the uniformity bound of ``f`` at scale ``c``.
    """
    from .maps import surjectivity_constant, uniformity_control

    K = surjectivity_constant(f)
    d = uniformity_control(f, [c])(c)
    src, tgt = f.source, f.target

    def nearest_preimage(label):
        row = tgt.pair_dist(np.full(len(f.images), tgt.index(label)), f.images)
        return src.points[int(np.argmin(row))]

    x, x2 = nearest_preimage(y), nearest_preimage(y2)
    path = min_cpath(src, c, x, x2)
    if path is None:
        raise DisconnectedError(f"source is not {c:g}-coarsely connected")
    return [y] + [f(a) for a in path.points] + [y2], max(K, d)
